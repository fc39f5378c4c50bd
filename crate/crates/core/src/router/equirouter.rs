//! EquiRouter: a shared query trunk, per-model FiLM modulation driven by
//! learned model embeddings, a compact joint feature, and a scoring head
//! trained with the pairwise logistic ranking loss.
//!
//! For query embedding `q` and model `j`:
//!
//! ```text
//! z         = f(q)                       trunk, d_q -> D
//! [g_j; b_j] = phi(m_j)                  linear, d_m -> 2D
//! e_j       = psi(m_j)                   linear, d_m -> D
//! z_j       = g_j * z + b_j
//! h_j       = [z_j, e_j, z_j * e_j, |z_j - e_j|]     (or [z_j, e_j] without the joint feature)
//! s_j       = head(h_j)                  4D -> D -> 1
//! ```

use serde::{Deserialize, Serialize};

use super::pairs::{build_pairs, ranking_loss_grad};
use super::train::{fit, Objective, TrainHyper, TrainingLog};
use crate::dataset::{RoutingTable, SplitIndices};
use crate::error::{Error, Result};
use crate::nn::{xavier_bound, Activation, Checkpoint, DenseLayer, LayerGrads, Parameters, Tensor2, TensorSpec};
use crate::rng::SplitMix64;

/// What the scoring head sees for each query-model pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadInput {
    /// `[z_j, e_j, z_j * e_j, |z_j - e_j|]`, width 4D.
    Joint,
    /// `[z_j, e_j]`, width 2D.
    Concat,
}

impl HeadInput {
    pub fn width(self, hidden: usize) -> usize {
        match self {
            HeadInput::Joint => 4 * hidden,
            HeadInput::Concat => 2 * hidden,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreObjective {
    Ranking,
    /// Pointwise squared error between scores and performance labels.
    Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquiRouterHyper {
    /// Latent width `D`.
    pub hidden: usize,
    /// Model-embedding width `d_m`.
    pub model_dim: usize,
    pub head_input: HeadInput,
    pub objective: ScoreObjective,
    pub train: TrainHyper,
}

impl Default for EquiRouterHyper {
    fn default() -> Self {
        Self {
            hidden: 128,
            model_dim: 64,
            head_input: HeadInput::Joint,
            objective: ScoreObjective::Ranking,
            train: TrainHyper::default(),
        }
    }
}

/// Trainable tensors: model embeddings, trunk, FiLM projection, model
/// projection and scoring head. Also used as the gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct EquiRouterParams {
    pub model_embeddings: Tensor2,
    pub trunk: Vec<DenseLayer>,
    pub film_proj: DenseLayer,
    pub model_proj: DenseLayer,
    pub score_head: Vec<DenseLayer>,
    pub head_input: HeadInput,
}

impl Parameters for EquiRouterParams {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = vec![self.model_embeddings.as_slice()];
        for layer in self
            .trunk
            .iter()
            .chain([&self.film_proj, &self.model_proj])
            .chain(&self.score_head)
        {
            out.extend(layer.param_slices());
        }
        out
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.model_embeddings.as_mut_slice()];
        for layer in self
            .trunk
            .iter_mut()
            .chain([&mut self.film_proj, &mut self.model_proj])
            .chain(self.score_head.iter_mut())
        {
            out.extend(layer.param_slices_mut());
        }
        out
    }
}

impl EquiRouterParams {
    /// Seeded initialization: trunk `d_q -> D -> D` (relu), FiLM `d_m -> 2D`,
    /// projection `d_m -> D`, head `width -> D -> 1` (relu hidden).
    pub fn init(
        embed_dim: usize,
        n_models: usize,
        hidden: usize,
        model_dim: usize,
        head_input: HeadInput,
        seed: u64,
    ) -> Self {
        let mut rng = SplitMix64::derived(seed, 0x1417);
        let model_embeddings = Tensor2::uniform(n_models, model_dim, xavier_bound(n_models, model_dim), &mut rng);
        let trunk = vec![
            DenseLayer::init(embed_dim, hidden, Activation::Relu, &mut rng),
            DenseLayer::init(hidden, hidden, Activation::Relu, &mut rng),
        ];
        let film_proj = DenseLayer::init(model_dim, 2 * hidden, Activation::Identity, &mut rng);
        let model_proj = DenseLayer::init(model_dim, hidden, Activation::Identity, &mut rng);
        let score_head = vec![
            DenseLayer::init(head_input.width(hidden), hidden, Activation::Relu, &mut rng),
            DenseLayer::init(hidden, 1, Activation::Identity, &mut rng),
        ];
        Self {
            model_embeddings,
            trunk,
            film_proj,
            model_proj,
            score_head,
            head_input,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            model_embeddings: Tensor2::zeros(self.model_embeddings.rows(), self.model_embeddings.cols()),
            trunk: self.trunk.iter().map(DenseLayer::zeros_like).collect(),
            film_proj: self.film_proj.zeros_like(),
            model_proj: self.model_proj.zeros_like(),
            score_head: self.score_head.iter().map(DenseLayer::zeros_like).collect(),
            head_input: self.head_input,
        }
    }

    pub fn n_models(&self) -> usize {
        self.model_embeddings.rows()
    }

    pub fn embed_dim(&self) -> usize {
        self.trunk[0].in_dim()
    }

    pub fn hidden(&self) -> usize {
        self.model_proj.out_dim()
    }

    pub fn model_dim(&self) -> usize {
        self.model_embeddings.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.hidden();
        let m = self.model_dim();
        let mut prev = self.embed_dim();
        for l in &self.trunk {
            if l.in_dim() != prev {
                return Err(Error::Shape("trunk layers do not chain".into()));
            }
            prev = l.out_dim();
        }
        if prev != d
            || self.film_proj.in_dim() != m
            || self.film_proj.out_dim() != 2 * d
            || self.model_proj.in_dim() != m
        {
            return Err(Error::Shape("trunk/FiLM/projection widths are inconsistent".into()));
        }
        let mut prev = self.head_input.width(d);
        for l in &self.score_head {
            if l.in_dim() != prev {
                return Err(Error::Shape("score head layers do not chain".into()));
            }
            prev = l.out_dim();
        }
        if prev != 1 {
            return Err(Error::Shape("score head must end in one output".into()));
        }
        Ok(())
    }

    fn model_side(&self) -> ModelSide {
        let film = self
            .film_proj
            .forward(&self.model_embeddings)
            .expect("validated shapes");
        let proj = self
            .model_proj
            .forward(&self.model_embeddings)
            .expect("validated shapes");
        ModelSide { film, proj }
    }
}

/// `z_j = gamma * z + beta`, elementwise.
pub fn film_modulate(z: &[f64], gamma: &[f64], beta: &[f64]) -> Result<Vec<f64>> {
    if z.len() != gamma.len() || z.len() != beta.len() {
        return Err(Error::Shape(format!(
            "FiLM inputs differ in length: z {}, gamma {}, beta {}",
            z.len(),
            gamma.len(),
            beta.len()
        )));
    }
    Ok(z.iter().zip(gamma).zip(beta).map(|((z, g), b)| g * z + b).collect())
}

/// `[z_j, e_j, z_j * e_j, |z_j - e_j|]`.
pub fn joint_feature(zj: &[f64], ej: &[f64]) -> Result<Vec<f64>> {
    if zj.len() != ej.len() {
        return Err(Error::Shape(format!(
            "joint feature inputs differ: {} vs {}",
            zj.len(),
            ej.len()
        )));
    }
    let mut h = Vec::with_capacity(4 * zj.len());
    write_head_input(HeadInput::Joint, zj, ej, &mut h);
    Ok(h)
}

fn write_head_input(mode: HeadInput, zj: &[f64], ej: &[f64], out: &mut Vec<f64>) {
    out.extend_from_slice(zj);
    out.extend_from_slice(ej);
    if mode == HeadInput::Joint {
        out.extend(zj.iter().zip(ej).map(|(a, b)| a * b));
        out.extend(zj.iter().zip(ej).map(|(a, b)| (a - b).abs()));
    }
}

/// Query-independent part of the forward pass: `phi(m_j)` (K x 2D) and `psi(m_j)` (K x D).
#[derive(Debug, Clone, PartialEq)]
struct ModelSide {
    film: Tensor2,
    proj: Tensor2,
}

impl ModelSide {
    fn gamma(&self, j: usize, d: usize) -> &[f64] {
        &self.film.row(j)[..d]
    }

    fn beta(&self, j: usize, d: usize) -> &[f64] {
        &self.film.row(j)[d..]
    }

    fn e(&self, j: usize) -> &[f64] {
        self.proj.row(j)
    }
}

fn head_forward(head: &[DenseLayer], x: &[f64], bufs: &mut [Vec<f64>; 2]) -> f64 {
    let [a, b] = bufs;
    let (mut cur, mut next) = (a, b);
    cur.clear();
    cur.extend_from_slice(x);
    for layer in head {
        next.resize(layer.out_dim(), 0.0);
        layer.forward_row_into(cur, next);
        std::mem::swap(&mut cur, &mut next);
    }
    cur[0]
}

/// Scores for every model on one query; recomputes the model-side
/// projections. [`EquiRouter`] caches them for repeated scoring.
pub fn score_all(params: &EquiRouterParams, q_embed: &[f64]) -> Result<Vec<f64>> {
    if q_embed.len() != params.embed_dim() {
        return Err(Error::Shape(format!(
            "query embedding has dimension {}, router expects {}",
            q_embed.len(),
            params.embed_dim()
        )));
    }
    Ok(score_with_side(params, &params.model_side(), q_embed))
}

fn score_with_side(params: &EquiRouterParams, side: &ModelSide, q: &[f64]) -> Vec<f64> {
    let d = params.hidden();
    let mut z = q.to_vec();
    for layer in &params.trunk {
        z = layer.forward_row(&z);
    }
    let mut h = Vec::with_capacity(params.head_input.width(d));
    let mut bufs = [Vec::new(), Vec::new()];
    (0..params.n_models())
        .map(|j| {
            let zj: Vec<f64> = z
                .iter()
                .zip(side.gamma(j, d))
                .zip(side.beta(j, d))
                .map(|((z, g), b)| g * z + b)
                .collect();
            h.clear();
            write_head_input(params.head_input, &zj, side.e(j), &mut h);
            head_forward(&params.score_head, &h, &mut bufs)
        })
        .collect()
}

/// Multiply-add accounting for scoring one query against `K` models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoringCost {
    /// Trunk work, paid once per query.
    pub trunk: usize,
    /// Modulation, joint feature and head work, paid once per model.
    pub per_model: usize,
}

impl ScoringCost {
    pub fn total(&self, n_models: usize) -> usize {
        self.trunk + n_models * self.per_model
    }
}

/// Trained (or freshly initialized) EquiRouter with cached model-side projections.
#[derive(Debug, Clone, PartialEq)]
pub struct EquiRouter {
    params: EquiRouterParams,
    side: ModelSide,
}

impl EquiRouter {
    pub fn new(params: EquiRouterParams) -> Result<Self> {
        params.validate()?;
        let side = params.model_side();
        Ok(Self { params, side })
    }

    pub fn params(&self) -> &EquiRouterParams {
        &self.params
    }

    pub fn score(&self, q_embed: &[f64]) -> Result<Vec<f64>> {
        if q_embed.len() != self.params.embed_dim() {
            return Err(Error::Shape(format!(
                "query embedding has dimension {}, router expects {}",
                q_embed.len(),
                self.params.embed_dim()
            )));
        }
        Ok(score_with_side(&self.params, &self.side, q_embed))
    }

    pub fn scoring_cost(&self) -> ScoringCost {
        let d = self.params.hidden();
        let trunk = self.params.trunk.iter().map(DenseLayer::macs_per_row).sum();
        let joint = match self.params.head_input {
            HeadInput::Joint => 2 * d,
            HeadInput::Concat => 0,
        };
        let head: usize = self.params.score_head.iter().map(DenseLayer::macs_per_row).sum();
        ScoringCost {
            trunk,
            per_model: d + joint + head,
        }
    }

    pub fn to_checkpoint(&self, kind: &str, hyper: &EquiRouterHyper) -> Result<Checkpoint> {
        let p = &self.params;
        let mut tensors = vec![TensorSpec::new("model_embeddings", &[p.n_models(), p.model_dim()])];
        let mut push_layer = |name: String, l: &DenseLayer| {
            tensors.push(TensorSpec::new(format!("{name}.weight"), &[l.out_dim(), l.in_dim()]));
            tensors.push(TensorSpec::new(format!("{name}.bias"), &[l.out_dim()]));
        };
        for (i, l) in p.trunk.iter().enumerate() {
            push_layer(format!("trunk.{i}"), l);
        }
        push_layer("film_proj".into(), &p.film_proj);
        push_layer("model_proj".into(), &p.model_proj);
        for (i, l) in p.score_head.iter().enumerate() {
            push_layer(format!("score_head.{i}"), l);
        }
        let meta = serde_json::json!({
            "embed_dim": p.embed_dim(),
            "n_models": p.n_models(),
            "hyper": hyper,
        });
        Checkpoint::new(kind, meta, tensors, p.flatten())
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<(Self, EquiRouterHyper)> {
        let bad = |m: &str| Error::Invalid(format!("EquiRouter checkpoint: {m}"));
        let hyper: EquiRouterHyper =
            serde_json::from_value(ckpt.meta["hyper"].clone()).map_err(|e| bad(&e.to_string()))?;
        let embed_dim = ckpt.meta["embed_dim"]
            .as_u64()
            .ok_or_else(|| bad("missing embed_dim"))? as usize;
        let n_models = ckpt.meta["n_models"].as_u64().ok_or_else(|| bad("missing n_models"))? as usize;
        let mut params =
            EquiRouterParams::init(embed_dim, n_models, hyper.hidden, hyper.model_dim, hyper.head_input, 0);
        params.load_flat(&ckpt.values)?;
        Ok((Self::new(params)?, hyper))
    }
}

/// Activations of one batch, kept for the backward pass.
struct BatchForward {
    trunk_acts: Vec<Tensor2>,
    side: ModelSide,
    /// Modulated features `z_j`, one row per (query, model) pair.
    modulated: Tensor2,
    head_acts: Vec<Tensor2>,
}

impl BatchForward {
    fn scores(&self) -> &[f64] {
        self.head_acts.last().expect("head output").as_slice()
    }
}

fn forward_batch(params: &EquiRouterParams, table: &RoutingTable, batch: &[usize]) -> BatchForward {
    let d = params.hidden();
    let k = params.n_models();
    let mut x = Tensor2::zeros(batch.len(), params.embed_dim());
    for (r, &n) in batch.iter().enumerate() {
        x.row_mut(r).copy_from_slice(table.embedding(n));
    }
    let mut trunk_acts = vec![x];
    for layer in &params.trunk {
        let next = layer.forward(trunk_acts.last().unwrap()).expect("validated shapes");
        trunk_acts.push(next);
    }
    let z = trunk_acts.last().unwrap();
    let side = params.model_side();

    let width = params.head_input.width(d);
    let mut modulated = Tensor2::zeros(batch.len() * k, d);
    let mut h_data = Vec::with_capacity(batch.len() * k * width);
    for b in 0..batch.len() {
        let zb = z.row(b);
        for j in 0..k {
            let row = modulated.row_mut(b * k + j);
            for ((out, (g, bt)), zv) in row.iter_mut().zip(side.gamma(j, d).iter().zip(side.beta(j, d))).zip(zb) {
                *out = g * zv + bt;
            }
            write_head_input(params.head_input, modulated.row(b * k + j), side.e(j), &mut h_data);
        }
    }
    let h = Tensor2::from_vec(batch.len() * k, width, h_data).expect("head input shape");
    let mut head_acts = vec![h];
    for layer in &params.score_head {
        let next = layer.forward(head_acts.last().unwrap()).expect("validated shapes");
        head_acts.push(next);
    }
    BatchForward {
        trunk_acts,
        side,
        modulated,
        head_acts,
    }
}

fn layer_grads_mut(layer: &mut DenseLayer) -> LayerGrads {
    LayerGrads::zeros_for(layer)
}

fn add_into(target: &mut DenseLayer, g: &LayerGrads) {
    for (t, v) in target.weight.as_mut_slice().iter_mut().zip(g.weight.as_slice()) {
        *t += v;
    }
    for (t, v) in target.bias.iter_mut().zip(&g.bias) {
        *t += v;
    }
}

/// Backpropagates `d loss / d scores` (one entry per (query, model) pair,
/// row-major) into `grads`.
fn backward_batch(params: &EquiRouterParams, fwd: &BatchForward, score_grad: &[f64], grads: &mut EquiRouterParams) {
    let d = params.hidden();
    let k = params.n_models();
    let rows = score_grad.len();
    let batch = rows / k;

    let mut upstream = Tensor2::from_vec(rows, 1, score_grad.to_vec()).expect("score grad shape");
    for (l, layer) in params.score_head.iter().enumerate().rev() {
        let mut lg = layer_grads_mut(&mut grads.score_head[l]);
        upstream = layer
            .backward_accumulate(&fwd.head_acts[l], &fwd.head_acts[l + 1], &upstream, &mut lg)
            .expect("validated shapes");
        add_into(&mut grads.score_head[l], &lg);
    }
    let grad_h = upstream;

    let z = fwd.trunk_acts.last().unwrap();
    let mut grad_z = Tensor2::zeros(batch, d);
    let mut grad_film = Tensor2::zeros(k, 2 * d);
    let mut grad_proj = Tensor2::zeros(k, d);
    let mut grad_zj = vec![0.0; d];
    for b in 0..batch {
        let zb = z.row(b);
        for j in 0..k {
            let r = b * k + j;
            let gh = grad_h.row(r);
            let zj = fwd.modulated.row(r);
            let ej = fwd.side.e(j);
            let ge = grad_proj.row_mut(j);
            grad_zj.copy_from_slice(&gh[..d]);
            for i in 0..d {
                ge[i] += gh[d + i];
            }
            if params.head_input == HeadInput::Joint {
                for i in 0..d {
                    let prod = gh[2 * d + i];
                    let sign = match zj[i] - ej[i] {
                        x if x > 0.0 => 1.0,
                        x if x < 0.0 => -1.0,
                        _ => 0.0,
                    };
                    let absd = gh[3 * d + i] * sign;
                    grad_zj[i] += prod * ej[i] + absd;
                    ge[i] += prod * zj[i] - absd;
                }
            }
            let gamma = fwd.side.gamma(j, d);
            let gf = grad_film.row_mut(j);
            let gzb = grad_z.row_mut(b);
            for i in 0..d {
                gf[i] += grad_zj[i] * zb[i];
                gf[d + i] += grad_zj[i];
                gzb[i] += grad_zj[i] * gamma[i];
            }
        }
    }

    let mut lg = LayerGrads::zeros_for(&params.film_proj);
    let gm_film = params
        .film_proj
        .backward_accumulate(&params.model_embeddings, &fwd.side.film, &grad_film, &mut lg)
        .expect("validated shapes");
    add_into(&mut grads.film_proj, &lg);
    let mut lg = LayerGrads::zeros_for(&params.model_proj);
    let gm_proj = params
        .model_proj
        .backward_accumulate(&params.model_embeddings, &fwd.side.proj, &grad_proj, &mut lg)
        .expect("validated shapes");
    add_into(&mut grads.model_proj, &lg);
    for ((g, a), b) in grads
        .model_embeddings
        .as_mut_slice()
        .iter_mut()
        .zip(gm_film.as_slice())
        .zip(gm_proj.as_slice())
    {
        *g += a + b;
    }

    let mut upstream = grad_z;
    for (l, layer) in params.trunk.iter().enumerate().rev() {
        let mut lg = LayerGrads::zeros_for(layer);
        upstream = layer
            .backward_accumulate(&fwd.trunk_acts[l], &fwd.trunk_acts[l + 1], &upstream, &mut lg)
            .expect("validated shapes");
        add_into(&mut grads.trunk[l], &lg);
    }
}

/// Score-fitting objective over a routing table, either ranking or MSE.
pub(crate) struct ScoreFit<'a> {
    table: &'a RoutingTable,
    objective: ScoreObjective,
    pairs: Vec<Vec<(usize, usize)>>,
}

impl<'a> ScoreFit<'a> {
    pub(crate) fn new(table: &'a RoutingTable, objective: ScoreObjective) -> Self {
        let pairs = match objective {
            ScoreObjective::Ranking => (0..table.n_queries())
                .map(|n| build_pairs(table.perf_row(n), table.cost_row(n)))
                .collect(),
            ScoreObjective::Mse => Vec::new(),
        };
        Self {
            table,
            objective,
            pairs,
        }
    }

    fn contributing(&self, indices: &[usize]) -> Vec<usize> {
        match self.objective {
            ScoreObjective::Ranking => indices.iter().copied().filter(|&n| !self.pairs[n].is_empty()).collect(),
            ScoreObjective::Mse => indices.to_vec(),
        }
    }

    /// Mean loss over contributing queries and `d loss / d scores`.
    fn loss_and_score_grad(&self, batch: &[usize], scores: &[f64], k: usize) -> (f64, Vec<f64>) {
        let weight = 1.0 / batch.len() as f64;
        let mut grad = vec![0.0; scores.len()];
        let mut total = 0.0;
        for (b, &n) in batch.iter().enumerate() {
            let s = &scores[b * k..(b + 1) * k];
            let g = &mut grad[b * k..(b + 1) * k];
            match self.objective {
                ScoreObjective::Ranking => {
                    total += ranking_loss_grad(s, &self.pairs[n], weight, g).expect("contributing query");
                }
                ScoreObjective::Mse => {
                    let a = self.table.perf_row(n);
                    let mut sq = 0.0;
                    for j in 0..k {
                        let diff = s[j] - a[j];
                        sq += diff * diff;
                        g[j] += 2.0 * diff * weight / k as f64;
                    }
                    total += sq / k as f64;
                }
            }
        }
        (total * weight, grad)
    }
}

impl Objective<EquiRouterParams> for ScoreFit<'_> {
    fn loss_grad(
        &self,
        params: &EquiRouterParams,
        batch: &[usize],
        grads: &mut EquiRouterParams,
    ) -> Result<Option<f64>> {
        let batch = self.contributing(batch);
        if batch.is_empty() {
            return Ok(None);
        }
        let fwd = forward_batch(params, self.table, &batch);
        let (loss, score_grad) = self.loss_and_score_grad(&batch, fwd.scores(), params.n_models());
        if !loss.is_finite() {
            return Err(Error::Numeric("non-finite training loss".into()));
        }
        backward_batch(params, &fwd, &score_grad, grads);
        Ok(Some(loss))
    }

    fn loss(&self, params: &EquiRouterParams, indices: &[usize]) -> Result<Option<f64>> {
        let batch = self.contributing(indices);
        if batch.is_empty() {
            return Ok(None);
        }
        let mut total = 0.0;
        for chunk in batch.chunks(1024) {
            let fwd = forward_batch(params, self.table, chunk);
            let (loss, _) = self.loss_and_score_grad(chunk, fwd.scores(), params.n_models());
            total += loss * chunk.len() as f64;
        }
        Ok(Some(total / batch.len() as f64))
    }
}

/// Full training objective `mean loss + (lambda / 2) * ||theta||^2` and its
/// gradient over `indices`. Used for gradient verification; training applies
/// the same penalty through decoupled weight decay.
pub fn objective_and_grad(
    params: &EquiRouterParams,
    table: &RoutingTable,
    indices: &[usize],
    objective: ScoreObjective,
    lambda: f64,
) -> Result<(f64, EquiRouterParams)> {
    let fit = ScoreFit::new(table, objective);
    let mut grads = params.zeros_like();
    let data = fit
        .loss_grad(params, indices, &mut grads)?
        .ok_or(Error::NoSupervision)?;
    let penalty = 0.5 * lambda * params.squared_norm();
    for (g, p) in grads.param_slices_mut().into_iter().zip(params.param_slices()) {
        for (gi, pi) in g.iter_mut().zip(p) {
            *gi += lambda * pi;
        }
    }
    Ok((data + penalty, grads))
}

pub fn objective_value(
    params: &EquiRouterParams,
    table: &RoutingTable,
    indices: &[usize],
    objective: ScoreObjective,
    lambda: f64,
) -> Result<f64> {
    let fit = ScoreFit::new(table, objective);
    let data = fit.loss(params, indices)?.ok_or(Error::NoSupervision)?;
    Ok(data + 0.5 * lambda * params.squared_norm())
}

fn check_table(table: &RoutingTable, split: &SplitIndices) -> Result<()> {
    if split.train.is_empty() {
        return Err(Error::Invalid("training split is empty".into()));
    }
    let n = table.n_queries();
    if split.train.iter().chain(&split.valid).any(|&i| i >= n) {
        return Err(Error::Invalid("split index out of range for table".into()));
    }
    Ok(())
}

/// Trains the configured variant (ranking or MSE, joint or concatenated head
/// input) and returns the best-validation checkpoint with its log.
pub fn train_equirouter(
    table: &RoutingTable,
    split: &SplitIndices,
    hyper: &EquiRouterHyper,
) -> Result<(EquiRouter, TrainingLog)> {
    check_table(table, split)?;
    if hyper.hidden == 0 || hyper.model_dim == 0 {
        return Err(Error::Invalid("hidden and model_dim must be positive".into()));
    }
    let fit_obj = ScoreFit::new(table, hyper.objective);
    if hyper.objective == ScoreObjective::Ranking && fit_obj.contributing(&split.train).is_empty() {
        return Err(Error::NoSupervision);
    }
    let params = EquiRouterParams::init(
        table.embed_dim(),
        table.n_models(),
        hyper.hidden,
        hyper.model_dim,
        hyper.head_input,
        hyper.train.seed,
    );
    let (params, log) = fit(
        params,
        EquiRouterParams::zeros_like,
        &fit_obj,
        &split.train,
        &split.valid,
        &hyper.train,
    )?;
    Ok((EquiRouter::new(params)?, log))
}

/// MSE ablation: same architecture, pointwise squared error on performance.
pub fn train_mse_ablation(
    table: &RoutingTable,
    split: &SplitIndices,
    hyper: &EquiRouterHyper,
) -> Result<(EquiRouter, TrainingLog)> {
    let hyper = EquiRouterHyper {
        objective: ScoreObjective::Mse,
        ..hyper.clone()
    };
    train_equirouter(table, split, &hyper)
}

/// Ablation without the joint feature: the head sees `[z_j, e_j]` only.
pub fn train_no_joint_ablation(
    table: &RoutingTable,
    split: &SplitIndices,
    hyper: &EquiRouterHyper,
) -> Result<(EquiRouter, TrainingLog)> {
    let hyper = EquiRouterHyper {
        head_input: HeadInput::Concat,
        ..hyper.clone()
    };
    train_equirouter(table, split, &hyper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, Matrix, ModelInfo, QueryRecord, SynthConfig};
    use crate::nn::grad_check;

    fn tiny_table(n: usize, k: usize, d: usize, seed: u64) -> RoutingTable {
        let mut rng = SplitMix64::new(seed);
        let models = (0..k)
            .map(|j| ModelInfo {
                id: j,
                name: format!("m{j}"),
                unit_price: 1.0,
            })
            .collect();
        let queries = (0..n)
            .map(|i| QueryRecord {
                query_id: i.to_string(),
                embedding: (0..d).map(|_| rng.standard_normal()).collect(),
            })
            .collect();
        let perf = Matrix::from_fn(n, k, |_, _| (rng.below(3) as f64) / 2.0);
        let cost = Matrix::from_fn(n, k, |_, j| 1.0 + j as f64 + rng.uniform());
        RoutingTable::new(models, queries, perf, cost).unwrap()
    }

    /// Straight-line recomputation of the scoring pipeline, written
    /// independently of the batched implementation.
    fn reference_scores(p: &EquiRouterParams, q: &[f64]) -> Vec<f64> {
        fn dense(l: &DenseLayer, x: &[f64]) -> Vec<f64> {
            (0..l.out_dim())
                .map(|o| {
                    let v = l.bias[o] + (0..l.in_dim()).map(|i| l.weight.get(o, i) * x[i]).sum::<f64>();
                    if l.activation == Activation::Relu {
                        v.max(0.0)
                    } else {
                        v
                    }
                })
                .collect()
        }
        let d = p.hidden();
        let mut z = q.to_vec();
        for l in &p.trunk {
            z = dense(l, &z);
        }
        (0..p.n_models())
            .map(|j| {
                let m = p.model_embeddings.row(j);
                let gb = dense(&p.film_proj, m);
                let e = dense(&p.model_proj, m);
                let zj: Vec<f64> = (0..d).map(|i| gb[i] * z[i] + gb[d + i]).collect();
                let mut h = zj.clone();
                h.extend(&e);
                if p.head_input == HeadInput::Joint {
                    h.extend((0..d).map(|i| zj[i] * e[i]));
                    h.extend((0..d).map(|i| (zj[i] - e[i]).abs()));
                }
                let mut x = h;
                for l in &p.score_head {
                    x = dense(l, &x);
                }
                x[0]
            })
            .collect()
    }

    #[test]
    fn film_examples() {
        assert_eq!(
            film_modulate(&[1.0, 2.0], &[1.0, 1.0], &[0.0, 0.0]).unwrap(),
            vec![1.0, 2.0]
        );
        assert_eq!(
            film_modulate(&[1.0, 2.0], &[0.0, 0.0], &[3.0, -4.0]).unwrap(),
            vec![3.0, -4.0]
        );
        assert_eq!(
            film_modulate(&[1.0, 2.0], &[2.0, 0.5], &[-1.0, 1.0]).unwrap(),
            vec![1.0, 2.0]
        );
        assert!(film_modulate(&[1.0], &[1.0, 2.0], &[0.0]).is_err());
    }

    #[test]
    fn joint_feature_examples() {
        assert_eq!(
            joint_feature(&[1.0, -1.0], &[2.0, 3.0]).unwrap(),
            vec![1.0, -1.0, 2.0, 3.0, 2.0, -3.0, 1.0, 4.0]
        );
        let v = [0.5, -2.0, 3.0];
        let h = joint_feature(&v, &v).unwrap();
        assert_eq!(h.len(), 12);
        assert_eq!(&h[6..9], &[0.25, 4.0, 9.0]);
        assert_eq!(&h[9..], &[0.0, 0.0, 0.0]);
        assert!(joint_feature(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn scores_match_reference_pipeline() {
        for mode in [HeadInput::Joint, HeadInput::Concat] {
            let p = EquiRouterParams::init(5, 4, 6, 3, mode, 17);
            let q = [0.3, -1.2, 0.8, 2.0, -0.1];
            let got = score_all(&p, &q).unwrap();
            let want = reference_scores(&p, &q);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "{mode:?}: {got:?} vs {want:?}");
            }
            let router = EquiRouter::new(p.clone()).unwrap();
            assert_eq!(router.score(&q).unwrap(), got);
        }
    }

    #[test]
    fn batched_forward_matches_single_query_scoring() {
        let t = tiny_table(6, 3, 4, 2);
        let p = EquiRouterParams::init(4, 3, 5, 3, HeadInput::Joint, 3);
        let batch = [4, 0, 5];
        let fwd = forward_batch(&p, &t, &batch);
        for (b, &n) in batch.iter().enumerate() {
            let single = score_all(&p, t.embedding(n)).unwrap();
            for (j, s) in single.iter().enumerate() {
                assert!((fwd.scores()[b * 3 + j] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_model_embeddings_give_identical_scores() {
        for mode in [HeadInput::Joint, HeadInput::Concat] {
            let mut p = EquiRouterParams::init(3, 3, 4, 2, mode, 5);
            let row0 = p.model_embeddings.row(0).to_vec();
            p.model_embeddings.row_mut(2).copy_from_slice(&row0);
            let s = score_all(&p, &[0.1, 0.2, -0.3]).unwrap();
            assert_eq!(s[0], s[2]);
        }
    }

    #[test]
    fn zeroed_head_outputs_bias() {
        let mut p = EquiRouterParams::init(3, 4, 4, 2, HeadInput::Joint, 5);
        let last = p.score_head.last_mut().unwrap();
        last.weight.fill(0.0);
        last.bias[0] = 0.25;
        assert_eq!(score_all(&p, &[1.0, 2.0, 3.0]).unwrap(), vec![0.25; 4]);
    }

    #[test]
    fn head_width_follows_mode() {
        let p = EquiRouterParams::init(3, 2, 8, 2, HeadInput::Concat, 1);
        assert_eq!(p.score_head[0].in_dim(), 16);
        let p = EquiRouterParams::init(3, 2, 8, 2, HeadInput::Joint, 1);
        assert_eq!(p.score_head[0].in_dim(), 32);
    }

    #[test]
    fn shape_mismatch_in_scoring() {
        let p = EquiRouterParams::init(3, 2, 4, 2, HeadInput::Joint, 1);
        assert!(score_all(&p, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn permuting_models_permutes_scores() {
        let p = EquiRouterParams::init(4, 4, 5, 3, HeadInput::Joint, 9);
        let perm = [2, 0, 3, 1];
        let mut permuted = p.clone();
        for (new, &old) in perm.iter().enumerate() {
            permuted
                .model_embeddings
                .row_mut(new)
                .copy_from_slice(p.model_embeddings.row(old));
        }
        let q = [0.4, -0.2, 1.1, 0.0];
        let s = score_all(&p, &q).unwrap();
        let sp = score_all(&permuted, &q).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            assert_eq!(sp[new], s[old]);
        }
    }

    #[test]
    fn objective_gradients_match_finite_differences() {
        let t = tiny_table(4, 3, 5, 11);
        let idx = [0, 1, 2, 3];
        for (objective, mode) in [
            (ScoreObjective::Ranking, HeadInput::Joint),
            (ScoreObjective::Ranking, HeadInput::Concat),
            (ScoreObjective::Mse, HeadInput::Joint),
        ] {
            let p = EquiRouterParams::init(5, 3, 8, 4, mode, 21);
            let (_, grads) = objective_and_grad(&p, &t, &idx, objective, 1e-3).unwrap();
            let report = grad_check(
                &p,
                &grads,
                |q: &EquiRouterParams| objective_value(q, &t, &idx, objective, 1e-3).unwrap(),
                1e-5,
                1e-4,
                None,
            )
            .unwrap();
            assert!(report.passed(), "{objective:?}/{mode:?}: {report:?}");
        }
    }

    #[test]
    fn scoring_cost_is_linear_in_model_count() {
        let mut costs = Vec::new();
        for k in [2, 4, 8, 16] {
            let r = EquiRouter::new(EquiRouterParams::init(10, k, 8, 4, HeadInput::Joint, 1)).unwrap();
            costs.push((k, r.scoring_cost()));
        }
        let trunk = costs[0].1.trunk;
        let per_model = costs[0].1.per_model;
        assert_eq!(trunk, 10 * 8 + 8 * 8);
        for (k, c) in &costs {
            assert_eq!(c.trunk, trunk);
            assert_eq!(c.per_model, per_model);
            assert_eq!(c.total(*k), trunk + k * per_model);
        }
    }

    #[test]
    fn no_supervision_is_an_error() {
        let models = (0..2)
            .map(|j| ModelInfo {
                id: j,
                name: format!("m{j}"),
                unit_price: 1.0,
            })
            .collect();
        let queries = (0..4)
            .map(|i| QueryRecord {
                query_id: i.to_string(),
                embedding: vec![i as f64],
            })
            .collect();
        let t = RoutingTable::new(
            models,
            queries,
            Matrix::from_fn(4, 2, |_, _| 1.0),
            Matrix::from_fn(4, 2, |_, _| 1.0),
        )
        .unwrap();
        let split = SplitIndices::full(4);
        let hyper = EquiRouterHyper {
            hidden: 4,
            model_dim: 2,
            ..Default::default()
        };
        assert!(matches!(
            train_equirouter(&t, &split, &hyper),
            Err(Error::NoSupervision)
        ));
    }

    fn quick_hyper(seed: u64) -> EquiRouterHyper {
        EquiRouterHyper {
            hidden: 16,
            model_dim: 8,
            train: TrainHyper {
                epochs: 60,
                batch_size: 32,
                learning_rate: 3e-3,
                seed,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn initial_loss_near_ln2_and_training_is_deterministic() {
        let t = generate_synthetic(&SynthConfig {
            n_queries: 200,
            n_models: 3,
            embed_dim: 8,
            ..Default::default()
        })
        .unwrap();
        let split = crate::dataset::make_split(200, [3.0, 1.0, 6.0], 42).unwrap();
        let (a, log_a) = train_equirouter(&t, &split, &quick_hyper(5)).unwrap();
        let (b, log_b) = train_equirouter(&t, &split, &quick_hyper(5)).unwrap();
        assert!(
            (log_a.epochs[0].train_loss - std::f64::consts::LN_2).abs() < 0.1,
            "{:?}",
            log_a.epochs[0]
        );
        assert_eq!(log_a, log_b);
        let bytes_a = a.to_checkpoint("equirouter", &quick_hyper(5)).unwrap().to_bytes();
        let bytes_b = b.to_checkpoint("equirouter", &quick_hyper(5)).unwrap().to_bytes();
        assert_eq!(bytes_a, bytes_b);
        let best = log_a.epochs[log_a.best_epoch].valid_loss;
        assert!(best < log_a.epochs[0].valid_loss);
    }

    #[test]
    fn separable_two_model_table_is_learned() {
        // The sign of the first embedding coordinate decides which model wins.
        let mut rng = SplitMix64::new(8);
        let n = 120;
        let embeds: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.standard_normal()).collect())
            .collect();
        let perf = Matrix::from_fn(n, 2, |i, j| if (embeds[i][0] > 0.0) == (j == 0) { 1.0 } else { 0.0 });
        let t = RoutingTable::new(
            (0..2)
                .map(|j| ModelInfo {
                    id: j,
                    name: format!("m{j}"),
                    unit_price: 1.0,
                })
                .collect(),
            embeds
                .into_iter()
                .enumerate()
                .map(|(i, e)| QueryRecord {
                    query_id: i.to_string(),
                    embedding: e,
                })
                .collect(),
            perf,
            Matrix::from_fn(n, 2, |_, j| 1.0 + j as f64),
        )
        .unwrap();
        let split = SplitIndices::full(n);
        let mut hyper = quick_hyper(1);
        hyper.train.epochs = 150;
        let (router, _) = train_equirouter(&t, &split, &hyper).unwrap();
        let correct = (0..n)
            .filter(|&i| {
                let s = router.score(t.embedding(i)).unwrap();
                let a = t.perf_row(i);
                (a[0] > a[1]) == (s[0] > s[1])
            })
            .count();
        assert!(correct as f64 / n as f64 >= 0.99, "{correct}/{n}");
    }

    #[test]
    fn mse_ablation_fits_constant_targets() {
        let n = 30;
        let mut rng = SplitMix64::new(4);
        let t = RoutingTable::new(
            (0..3)
                .map(|j| ModelInfo {
                    id: j,
                    name: format!("m{j}"),
                    unit_price: 1.0,
                })
                .collect(),
            (0..n)
                .map(|i| QueryRecord {
                    query_id: i.to_string(),
                    embedding: (0..4).map(|_| rng.standard_normal()).collect(),
                })
                .collect(),
            Matrix::from_fn(n, 3, |_, _| 0.5),
            Matrix::from_fn(n, 3, |_, j| 1.0 + j as f64),
        )
        .unwrap();
        let split = SplitIndices::full(n);
        let mut hyper = quick_hyper(2);
        hyper.train.epochs = 200;
        let (router, log) = train_mse_ablation(&t, &split, &hyper).unwrap();
        assert!(log.epochs[log.best_epoch].train_loss < 1e-4, "{:?}", log.epochs.last());
        let s = router.score(t.embedding(0)).unwrap();
        assert!(s.iter().all(|v| (v - 0.5).abs() < 0.02), "{s:?}");
    }

    #[test]
    fn mse_ablation_memorizes_three_queries() {
        let t = tiny_table(3, 3, 4, 31);
        let split = SplitIndices::full(3);
        let mut hyper = quick_hyper(3);
        hyper.train.epochs = 3000;
        hyper.train.learning_rate = 3e-3;
        hyper.train.weight_decay = 0.0;
        let (_, log) = train_mse_ablation(&t, &split, &hyper).unwrap();
        assert!(
            log.epochs[log.best_epoch].train_loss < 1e-4,
            "{:?}",
            log.epochs[log.best_epoch]
        );
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = EquiRouterParams::init(3, 4, 4, 2, HeadInput::Concat, 5);
        let router = EquiRouter::new(p).unwrap();
        let hyper = EquiRouterHyper {
            hidden: 4,
            model_dim: 2,
            head_input: HeadInput::Concat,
            ..Default::default()
        };
        let ckpt = router.to_checkpoint("equirouter_nojoint", &hyper).unwrap();
        let (back, h) = EquiRouter::from_checkpoint(&Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap()).unwrap();
        assert_eq!(back, router);
        assert_eq!(h, hyper);
    }
}
