//! Dense-network engine in 64-bit floats: row-major matrices, dense layers
//! with exact backpropagation, Adam with decoupled weight decay, a
//! finite-difference gradient checker and a flat binary checkpoint format.

mod adam;
mod checkpoint;
mod gradcheck;
mod layer;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, TensorSpec};
pub use gradcheck::{grad_check, GradCheckReport};
pub use layer::{Activation, DenseLayer, LayerGrads};
pub use tensor::Tensor2;

/// Anything holding trainable parameters as an ordered list of flat slices.
///
/// Gradient buffers implement the same trait with an identical layout, which
/// is how the optimizer pairs parameters with gradients.
pub trait Parameters {
    fn param_slices(&self) -> Vec<&[f64]>;
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    fn squared_norm(&self) -> f64 {
        self.param_slices().iter().flat_map(|s| s.iter()).map(|v| v * v).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    fn load_flat(&mut self, values: &[f64]) -> crate::Result<()> {
        let total = self.param_count();
        if values.len() != total {
            return Err(crate::Error::Shape(format!(
                "parameter block has {} values, expected {total}",
                values.len()
            )));
        }
        let mut offset = 0;
        for slice in self.param_slices_mut() {
            let len = slice.len();
            slice.copy_from_slice(&values[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }
}

/// Xavier/Glorot uniform bound.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}
