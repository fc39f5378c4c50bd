//! Minibatch Adam loop shared by every trainable router.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, Parameters};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    Constant,
    /// Cosine decay from the base rate to zero over all steps.
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub lr_schedule: LrSchedule,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 2048,
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            seed: 42,
            lr_schedule: LrSchedule::Constant,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Invalid("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Invalid(format!(
                "weight decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Row 0 holds the losses at initialization.
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,valid_loss\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{:?},{:?}\n", e.epoch, e.train_loss, e.valid_loss));
        }
        out
    }
}

/// A differentiable data-fitting objective over indexed examples.
pub(crate) trait Objective<P> {
    /// Mean loss over the examples in `batch` that carry supervision; its
    /// gradient is added into `grads`. `None` if no example contributes.
    fn loss_grad(&self, params: &P, batch: &[usize], grads: &mut P) -> Result<Option<f64>>;

    fn loss(&self, params: &P, indices: &[usize]) -> Result<Option<f64>>;
}

/// Runs `hyper.epochs` passes of shuffled minibatch Adam and returns the
/// parameters with the lowest validation loss (training loss when `valid`
/// is empty).
pub(crate) fn fit<P, O>(
    mut params: P,
    zero_grads: impl Fn(&P) -> P,
    objective: &O,
    train: &[usize],
    valid: &[usize],
    hyper: &TrainHyper,
) -> Result<(P, TrainingLog)>
where
    P: Parameters + Clone,
    O: Objective<P>,
{
    hyper.validate()?;
    if train.is_empty() {
        return Err(Error::Invalid("training split is empty".into()));
    }
    let batch_size = hyper.batch_size.min(train.len());
    let steps_per_epoch = train.len().div_ceil(batch_size);
    let total_steps = (steps_per_epoch * hyper.epochs) as f64;
    let mut adam = AdamState::for_params(
        AdamConfig {
            learning_rate: hyper.learning_rate,
            weight_decay: hyper.weight_decay,
            ..Default::default()
        },
        &params,
    );

    let evaluate = |p: &P| -> Result<(f64, f64)> {
        let train_loss = objective.loss(p, train)?.unwrap_or(f64::NAN);
        let valid_loss = if valid.is_empty() {
            train_loss
        } else {
            objective.loss(p, valid)?.unwrap_or(f64::NAN)
        };
        Ok((train_loss, valid_loss))
    };

    let (train_loss, valid_loss) = evaluate(&params)?;
    let mut log = TrainingLog {
        epochs: vec![EpochLog {
            epoch: 0,
            train_loss,
            valid_loss,
        }],
        best_epoch: 0,
    };
    let mut best = (valid_loss, params.clone());

    let mut order: Vec<usize> = train.to_vec();
    let mut step = 0usize;
    for epoch in 1..=hyper.epochs {
        SplitMix64::derived(hyper.seed, epoch as u64).shuffle(&mut order);
        for batch in order.chunks(batch_size) {
            let mut grads = zero_grads(&params);
            if objective.loss_grad(&params, batch, &mut grads)?.is_none() {
                step += 1;
                continue;
            }
            let lr = match hyper.lr_schedule {
                LrSchedule::Constant => hyper.learning_rate,
                LrSchedule::Cosine => {
                    let progress = step as f64 / total_steps;
                    0.5 * hyper.learning_rate * (1.0 + (std::f64::consts::PI * progress).cos())
                }
            };
            adam.step_with_lr(&mut params, &grads, lr)?;
            step += 1;
        }
        let (train_loss, valid_loss) = evaluate(&params)?;
        if !train_loss.is_finite() {
            return Err(Error::Numeric(format!("training loss diverged at epoch {epoch}")));
        }
        log.epochs.push(EpochLog {
            epoch,
            train_loss,
            valid_loss,
        });
        if valid_loss < best.0 || !best.0.is_finite() {
            best = (valid_loss, params.clone());
            log.best_epoch = epoch;
        }
    }
    Ok((best.1, log))
}
