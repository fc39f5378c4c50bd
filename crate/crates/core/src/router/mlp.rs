//! Two-layer regressors: the MLP performance baseline and the shared cost
//! predictor.

use serde::{Deserialize, Serialize};

use super::train::{fit, Objective, TrainHyper, TrainingLog};
use crate::dataset::{Matrix, RoutingTable, SplitIndices};
use crate::error::{Error, Result};
use crate::nn::{Activation, Checkpoint, DenseLayer, LayerGrads, Parameters, Tensor2, TensorSpec};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpHyper {
    pub hidden: usize,
    pub train: TrainHyper,
}

impl Default for MlpHyper {
    fn default() -> Self {
        Self {
            hidden: 128,
            train: TrainHyper::default(),
        }
    }
}

/// `d_q -> H (relu) -> K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub hidden: DenseLayer,
    pub output: DenseLayer,
}

impl Parameters for Mlp {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut v = self.hidden.param_slices();
        v.extend(self.output.param_slices());
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.hidden.param_slices_mut();
        v.extend(self.output.param_slices_mut());
        v
    }
}

impl Mlp {
    pub fn init(input: usize, hidden: usize, output: usize, seed: u64) -> Self {
        let mut rng = SplitMix64::derived(seed, 0x31F);
        Self {
            hidden: DenseLayer::init(input, hidden, Activation::Relu, &mut rng),
            output: DenseLayer::init(hidden, output, Activation::Identity, &mut rng),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            hidden: self.hidden.zeros_like(),
            output: self.output.zeros_like(),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.hidden.in_dim() {
            return Err(Error::Shape(format!(
                "input has dimension {}, network expects {}",
                x.len(),
                self.hidden.in_dim()
            )));
        }
        Ok(self.output.forward_row(&self.hidden.forward_row(x)))
    }

    fn tensors(&self) -> Vec<TensorSpec> {
        let mut t = Vec::new();
        for (name, l) in [("hidden", &self.hidden), ("output", &self.output)] {
            t.push(TensorSpec::new(format!("{name}.weight"), &[l.out_dim(), l.in_dim()]));
            t.push(TensorSpec::new(format!("{name}.bias"), &[l.out_dim()]));
        }
        t
    }
}

/// Mean squared error of `net(embedding_n)` against `targets` rows.
struct Regression<'a> {
    table: &'a RoutingTable,
    targets: &'a Matrix,
}

impl Regression<'_> {
    fn batch_inputs(&self, batch: &[usize]) -> Tensor2 {
        let mut x = Tensor2::zeros(batch.len(), self.table.embed_dim());
        for (r, &n) in batch.iter().enumerate() {
            x.row_mut(r).copy_from_slice(self.table.embedding(n));
        }
        x
    }
}

impl Objective<Mlp> for Regression<'_> {
    fn loss_grad(&self, net: &Mlp, batch: &[usize], grads: &mut Mlp) -> Result<Option<f64>> {
        if batch.is_empty() {
            return Ok(None);
        }
        let x = self.batch_inputs(batch);
        let h = net.hidden.forward(&x)?;
        let y = net.output.forward(&h)?;
        let k = y.cols();
        let scale = 2.0 / (batch.len() * k) as f64;
        let mut go = Tensor2::zeros(batch.len(), k);
        let mut total = 0.0;
        for (r, &n) in batch.iter().enumerate() {
            let t = self.targets.row(n);
            for (j, &target) in t.iter().enumerate() {
                let diff = y.get(r, j) - target;
                total += diff * diff;
                go.set(r, j, diff * scale);
            }
        }
        let mut g_out = LayerGrads::zeros_for(&net.output);
        let gh = net.output.backward_accumulate(&h, &y, &go, &mut g_out)?;
        let mut g_hidden = LayerGrads::zeros_for(&net.hidden);
        net.hidden.backward_accumulate(&x, &h, &gh, &mut g_hidden)?;
        for (dst, src) in grads
            .param_slices_mut()
            .into_iter()
            .zip(g_hidden.param_slices().into_iter().chain(g_out.param_slices()))
        {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
        Ok(Some(total / (batch.len() * k) as f64))
    }

    fn loss(&self, net: &Mlp, indices: &[usize]) -> Result<Option<f64>> {
        if indices.is_empty() {
            return Ok(None);
        }
        let mut total = 0.0;
        let mut count = 0usize;
        for &n in indices {
            let y = net.predict(self.table.embedding(n))?;
            for (p, t) in y.iter().zip(self.targets.row(n)) {
                total += (p - t) * (p - t);
                count += 1;
            }
        }
        Ok(Some(total / count as f64))
    }
}

fn train_regressor(
    table: &RoutingTable,
    targets: &Matrix,
    split: &SplitIndices,
    hyper: &MlpHyper,
) -> Result<(Mlp, TrainingLog)> {
    if split.train.is_empty() {
        return Err(Error::Invalid("training split is empty".into()));
    }
    if hyper.hidden == 0 {
        return Err(Error::Invalid("hidden width must be positive".into()));
    }
    let net = Mlp::init(table.embed_dim(), hyper.hidden, targets.cols(), hyper.train.seed);
    let objective = Regression { table, targets };
    fit(
        net,
        Mlp::zeros_like,
        &objective,
        &split.train,
        &split.valid,
        &hyper.train,
    )
}

fn mlp_meta(kind: &str, net: &Mlp, hyper: &MlpHyper, extra: serde_json::Value) -> Result<Checkpoint> {
    let meta = serde_json::json!({
        "embed_dim": net.hidden.in_dim(),
        "outputs": net.output.out_dim(),
        "hyper": hyper,
        "extra": extra,
    });
    Checkpoint::new(kind, meta, net.tensors(), net.flatten())
}

fn mlp_from_checkpoint(ckpt: &Checkpoint) -> Result<(Mlp, MlpHyper)> {
    let bad = |m: String| Error::Invalid(format!("MLP checkpoint: {m}"));
    let hyper: MlpHyper = serde_json::from_value(ckpt.meta["hyper"].clone()).map_err(|e| bad(e.to_string()))?;
    let input = ckpt.meta["embed_dim"]
        .as_u64()
        .ok_or_else(|| bad("missing embed_dim".into()))? as usize;
    let outputs = ckpt.meta["outputs"]
        .as_u64()
        .ok_or_else(|| bad("missing outputs".into()))? as usize;
    let mut net = Mlp::init(input, hyper.hidden, outputs, 0);
    net.load_flat(&ckpt.values)?;
    Ok((net, hyper))
}

/// MLP baseline: regresses per-model performance from the query embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpRouter {
    pub net: Mlp,
    pub hyper: MlpHyper,
}

impl MlpRouter {
    pub fn train(table: &RoutingTable, split: &SplitIndices, hyper: &MlpHyper) -> Result<(Self, TrainingLog)> {
        let (net, log) = train_regressor(table, table.perf(), split, hyper)?;
        Ok((
            Self {
                net,
                hyper: hyper.clone(),
            },
            log,
        ))
    }

    pub fn predict(&self, embedding: &[f64]) -> Result<Vec<f64>> {
        self.net.predict(embedding)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        mlp_meta("mlp", &self.net, &self.hyper, serde_json::Value::Null)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let (net, hyper) = mlp_from_checkpoint(ckpt)?;
        Ok(Self { net, hyper })
    }
}

/// Per-model cost regressor trained on standardized costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostPredictor {
    pub net: Mlp,
    pub hyper: MlpHyper,
    /// Per-model training-split mean.
    pub mean: Vec<f64>,
    /// Per-model training-split standard deviation; 1 for constant columns.
    pub std: Vec<f64>,
}

impl CostPredictor {
    pub fn train(table: &RoutingTable, split: &SplitIndices, hyper: &MlpHyper) -> Result<(Self, TrainingLog)> {
        if split.train.is_empty() {
            return Err(Error::Invalid("training split is empty".into()));
        }
        let k = table.n_models();
        let count = split.train.len() as f64;
        let mut mean = vec![0.0; k];
        for &n in &split.train {
            for (m, c) in mean.iter_mut().zip(table.cost_row(n)) {
                *m += c;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; k];
        for &n in &split.train {
            for ((v, c), m) in var.iter_mut().zip(table.cost_row(n)).zip(&mean) {
                *v += (c - m) * (c - m);
            }
        }
        let std: Vec<f64> = var
            .iter()
            .zip(&mean)
            .map(|(v, m)| {
                let s = (v / count).sqrt();
                if s > 1e-12 * m.abs().max(f64::MIN_POSITIVE) {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        let standardized = Matrix::from_fn(table.n_queries(), k, |n, j| (table.cost().get(n, j) - mean[j]) / std[j]);
        let (net, log) = train_regressor(table, &standardized, split, hyper)?;
        Ok((
            Self {
                net,
                hyper: hyper.clone(),
                mean,
                std,
            },
            log,
        ))
    }

    /// De-standardized predictions, clamped to the smallest positive cost.
    pub fn predict(&self, embedding: &[f64]) -> Result<Vec<f64>> {
        let raw = self.net.predict(embedding)?;
        Ok(raw
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(r, (m, s))| (r * s + m).max(f64::MIN_POSITIVE))
            .collect())
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        mlp_meta(
            "cost",
            &self.net,
            &self.hyper,
            serde_json::json!({ "mean": self.mean, "std": self.std }),
        )
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let (net, hyper) = mlp_from_checkpoint(ckpt)?;
        let extra = &ckpt.meta["extra"];
        let read = |key: &str| -> Result<Vec<f64>> {
            serde_json::from_value(extra[key].clone())
                .map_err(|e| Error::Invalid(format!("cost checkpoint {key}: {e}")))
        };
        Ok(Self {
            net,
            hyper,
            mean: read("mean")?,
            std: read("std")?,
        })
    }
}
