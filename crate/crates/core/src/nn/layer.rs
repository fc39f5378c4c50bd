use serde::{Deserialize, Serialize};

use super::{xavier_bound, Parameters, Tensor2};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
}

/// `y = act(x W^T + b)` with `W` stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Tensor2,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Gradients of one layer, laid out like the layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weight: Tensor2,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weight: Tensor2, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::Shape(format!(
                "bias length {} does not match {} outputs",
                bias.len(),
                weight.rows()
            )));
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    /// Xavier-uniform weights, zero bias.
    pub fn init(input: usize, output: usize, activation: Activation, rng: &mut SplitMix64) -> Self {
        Self {
            weight: Tensor2::uniform(output, input, xavier_bound(input, output), rng),
            bias: vec![0.0; output],
            activation,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weight: Tensor2::zeros(self.out_dim(), self.in_dim()),
            bias: vec![0.0; self.out_dim()],
            activation: self.activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    /// Multiply-adds for one input row.
    pub fn macs_per_row(&self) -> usize {
        self.in_dim() * self.out_dim()
    }

    pub fn forward(&self, x: &Tensor2) -> Result<Tensor2> {
        if x.cols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "layer expects {} inputs, got {}",
                self.in_dim(),
                x.cols()
            )));
        }
        let mut y = Tensor2::zeros(x.rows(), self.out_dim());
        for r in 0..x.rows() {
            self.forward_row_into(x.row(r), y.row_mut(r));
        }
        Ok(y)
    }

    /// Single-row forward pass; `out` must have `out_dim` entries.
    pub fn forward_row_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, y) in out.iter_mut().enumerate() {
            let w = self.weight.row(o);
            let mut acc = self.bias[o];
            for (wi, xi) in w.iter().zip(x) {
                acc += wi * xi;
            }
            *y = match self.activation {
                Activation::Identity => acc,
                Activation::Relu => acc.max(0.0),
            };
        }
    }

    pub fn forward_row(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dim()];
        self.forward_row_into(x, &mut out);
        out
    }

    /// Gradients given the input batch; recomputes the forward pass.
    pub fn backward(&self, x: &Tensor2, grad_out: &Tensor2) -> Result<(Tensor2, LayerGrads)> {
        let y = self.forward(x)?;
        let mut grads = LayerGrads {
            weight: Tensor2::zeros(self.out_dim(), self.in_dim()),
            bias: vec![0.0; self.out_dim()],
        };
        let grad_x = self.backward_accumulate(x, &y, grad_out, &mut grads)?;
        Ok((grad_x, grads))
    }

    /// Gradients given input and the forward output `y`; parameter gradients
    /// are added into `grads`. Returns the gradient w.r.t. the input.
    pub fn backward_accumulate(
        &self,
        x: &Tensor2,
        y: &Tensor2,
        grad_out: &Tensor2,
        grads: &mut LayerGrads,
    ) -> Result<Tensor2> {
        if x.cols() != self.in_dim()
            || grad_out.cols() != self.out_dim()
            || grad_out.rows() != x.rows()
            || y.shape() != grad_out.shape()
        {
            return Err(Error::Shape(format!(
                "backward shapes: x {:?}, y {:?}, grad_out {:?} for layer {}->{}",
                x.shape(),
                y.shape(),
                grad_out.shape(),
                self.in_dim(),
                self.out_dim()
            )));
        }
        let mut grad_x = Tensor2::zeros(x.rows(), self.in_dim());
        let mut delta = vec![0.0; self.out_dim()];
        for r in 0..x.rows() {
            let g = grad_out.row(r);
            let yr = y.row(r);
            for o in 0..self.out_dim() {
                delta[o] = match self.activation {
                    Activation::Identity => g[o],
                    Activation::Relu if yr[o] > 0.0 => g[o],
                    Activation::Relu => 0.0,
                };
            }
            let xr = x.row(r);
            let gx = grad_x.row_mut(r);
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                grads.bias[o] += d;
                let w = self.weight.row(o);
                let gw = grads.weight.row_mut(o);
                for i in 0..xr.len() {
                    gw[i] += d * xr[i];
                    gx[i] += d * w[i];
                }
            }
        }
        Ok(grad_x)
    }
}

impl LayerGrads {
    pub fn zeros_for(layer: &DenseLayer) -> Self {
        Self {
            weight: Tensor2::zeros(layer.out_dim(), layer.in_dim()),
            bias: vec![0.0; layer.out_dim()],
        }
    }
}

impl Parameters for DenseLayer {
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![self.weight.as_slice(), &self.bias]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weight.as_mut_slice(), &mut self.bias]
    }
}

impl Parameters for LayerGrads {
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![self.weight.as_slice(), &self.bias]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weight.as_mut_slice(), &mut self.bias]
    }
}
