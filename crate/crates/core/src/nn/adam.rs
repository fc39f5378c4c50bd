use serde::{Deserialize, Serialize};

use super::Parameters;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled decay: each step also subtracts `lr * weight_decay * param`.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adam moments for a fixed parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl AdamState {
    pub fn new(config: AdamConfig, param_count: usize) -> Self {
        Self {
            config,
            step: 0,
            first: vec![0.0; param_count],
            second: vec![0.0; param_count],
        }
    }

    pub fn for_params<P: Parameters + ?Sized>(config: AdamConfig, params: &P) -> Self {
        Self::new(config, params.param_count())
    }

    /// One bias-corrected Adam update at the configured learning rate.
    pub fn step<P, G>(&mut self, params: &mut P, grads: &G) -> Result<()>
    where
        P: Parameters + ?Sized,
        G: Parameters + ?Sized,
    {
        let lr = self.config.learning_rate;
        self.step_with_lr(params, grads, lr)
    }

    pub fn step_with_lr<P, G>(&mut self, params: &mut P, grads: &G, lr: f64) -> Result<()>
    where
        P: Parameters + ?Sized,
        G: Parameters + ?Sized,
    {
        let grad_slices = grads.param_slices();
        let mut param_slices = params.param_slices_mut();
        if grad_slices.len() != param_slices.len()
            || grad_slices
                .iter()
                .zip(param_slices.iter())
                .any(|(g, p)| g.len() != p.len())
        {
            return Err(Error::Shape("gradient layout does not match parameters".into()));
        }
        let total: usize = grad_slices.iter().map(|s| s.len()).sum();
        if total != self.first.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} parameters, got {total}",
                self.first.len()
            )));
        }

        self.step += 1;
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
            weight_decay,
            ..
        } = self.config;
        let bias1 = 1.0 - beta1.powi(self.step as i32);
        let bias2 = 1.0 - beta2.powi(self.step as i32);

        let mut idx = 0;
        for (p, g) in param_slices.iter_mut().zip(grad_slices.iter()) {
            for (pi, &gi) in p.iter_mut().zip(g.iter()) {
                let m = &mut self.first[idx];
                let v = &mut self.second[idx];
                *m = beta1 * *m + (1.0 - beta1) * gi;
                *v = beta2 * *v + (1.0 - beta2) * gi * gi;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *pi -= lr * (m_hat / (v_hat.sqrt() + epsilon) + weight_decay * *pi);
                idx += 1;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Flat(Vec<f64>);

    impl Parameters for Flat {
        fn param_slices(&self) -> Vec<&[f64]> {
            vec![&self.0]
        }
        fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn zero_gradient_zero_decay_is_identity() {
        let mut p = Flat(vec![0.3, -1.2, 5.0]);
        let mut adam = AdamState::for_params(AdamConfig::default(), &p);
        for _ in 0..10 {
            adam.step(&mut p, &Flat(vec![0.0; 3])).unwrap();
        }
        assert_eq!(p.0, vec![0.3, -1.2, 5.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Flat(vec![1.0]);
        let mut adam = AdamState::for_params(AdamConfig::default(), &p);
        adam.step(&mut p, &Flat(vec![1.0])).unwrap();
        // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps).
        let expected = 1.0 - 1e-3 / (1.0 + 1e-8);
        assert!((p.0[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn decay_only_shrinks_toward_zero() {
        let cfg = AdamConfig {
            weight_decay: 0.1,
            ..Default::default()
        };
        let mut p = Flat(vec![2.0, -4.0]);
        let mut adam = AdamState::for_params(cfg, &p);
        adam.step(&mut p, &Flat(vec![0.0, 0.0])).unwrap();
        assert!((p.0[0] - (2.0 - 1e-3 * 0.1 * 2.0)).abs() < 1e-15);
        assert!((p.0[1] - (-4.0 + 1e-3 * 0.1 * 4.0)).abs() < 1e-15);
    }

    #[test]
    fn layout_mismatch_is_rejected() {
        let mut p = Flat(vec![1.0, 2.0]);
        let mut adam = AdamState::for_params(AdamConfig::default(), &p);
        assert!(adam.step(&mut p, &Flat(vec![1.0])).is_err());
    }

    #[test]
    fn minimizes_quadratic() {
        let mut p = Flat(vec![3.0, -2.0]);
        let cfg = AdamConfig {
            learning_rate: 0.05,
            ..Default::default()
        };
        let mut adam = AdamState::for_params(cfg, &p);
        for _ in 0..2000 {
            let g = Flat(p.0.clone());
            adam.step(&mut p, &g).unwrap();
        }
        assert!(p.0.iter().all(|v| v.abs() < 1e-2), "{:?}", p.0);
    }
}
