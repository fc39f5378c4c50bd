//! Ground-truth routing: budget-feasible sets, the oracle selection rule,
//! top-two margins, label-noise injection and a Monte-Carlo check of which
//! model wins a noisy argmax.
//!
//! All argmax/argmin ties resolve to the lowest model index.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{Matrix, RoutingTable};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Models whose cost fits the budget. When none fits, the cheapest model is
/// force-included and `clamped` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleSet {
    pub query_index: usize,
    pub budget: f64,
    pub members: Vec<usize>,
    pub clamped: bool,
}

/// Feasible members of a cost row under `budget`, clamped to the cheapest model.
pub fn feasible_members(costs: &[f64], budget: f64) -> (Vec<usize>, bool) {
    let members: Vec<usize> = (0..costs.len()).filter(|&j| costs[j] <= budget).collect();
    if members.is_empty() {
        (vec![argmin_lowest(costs)], true)
    } else {
        (members, false)
    }
}

pub fn feasible_set(table: &RoutingTable, n: usize, budget: f64) -> FeasibleSet {
    let (members, clamped) = feasible_members(table.cost_row(n), budget);
    FeasibleSet {
        query_index: n,
        budget,
        members,
        clamped,
    }
}

fn argmin_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..values.len() {
        if values[j] < values[best] {
            best = j;
        }
    }
    best
}

/// Highest score among `members`; ties go to the lower cost, then the lower index.
/// `members` must be nonempty and sorted ascending.
pub fn select_lexicographic(scores: &[f64], costs: &[f64], members: &[usize]) -> usize {
    let mut best = members[0];
    for &j in &members[1..] {
        if scores[j] > scores[best] || (scores[j] == scores[best] && costs[j] < costs[best]) {
            best = j;
        }
    }
    best
}

/// Oracle choice: best true performance within the feasible set, cheapest among equals.
pub fn oracle_select(table: &RoutingTable, n: usize, budget: f64) -> usize {
    let costs = table.cost_row(n);
    let (members, _) = feasible_members(costs, budget);
    select_lexicographic(table.perf_row(n), costs, &members)
}

/// Gap between the best and second-best performance in the feasible set;
/// `None` when fewer than two models are feasible.
pub fn margin(table: &RoutingTable, n: usize, budget: f64) -> Option<f64> {
    let (members, _) = feasible_members(table.cost_row(n), budget);
    if members.len() < 2 {
        return None;
    }
    let perf = table.perf_row(n);
    let mut first = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &j in &members {
        let a = perf[j];
        if a > first {
            second = first;
            first = a;
        } else if a > second {
            second = a;
        }
    }
    Some(first - second)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginStats {
    pub margins: Vec<f64>,
    pub tie_rate: f64,
    /// `(threshold, Pr(margin <= threshold))`, thresholds ascending.
    pub cdf_at: Vec<(f64, f64)>,
}

impl MarginStats {
    pub fn cdf(&self) -> BTreeMap<String, f64> {
        self.cdf_at.iter().map(|(e, p)| (format!("{e:?}"), *p)).collect()
    }
}

pub fn margin_stats(table: &RoutingTable, budget: f64, thresholds: &[f64]) -> Result<MarginStats> {
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Invalid("margin thresholds must be sorted ascending".into()));
    }
    let margins: Vec<f64> = (0..table.n_queries())
        .filter_map(|n| margin(table, n, budget))
        .collect();
    if margins.is_empty() {
        return Err(Error::Invalid("no query has >=2 feasible models".into()));
    }
    let total = margins.len() as f64;
    let frac_at_most = |eps: f64| margins.iter().filter(|&&m| m <= eps).count() as f64 / total;
    Ok(MarginStats {
        tie_rate: frac_at_most(0.0),
        cdf_at: thresholds.iter().map(|&e| (e, frac_at_most(e))).collect(),
        margins,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub sigma: f64,
    pub seed: u64,
}

/// Standard normal draws for every `(n, j)` cell, row-major.
///
/// The same seed gives the same draws for any sigma, so noise at different
/// scales is `sigma * z` with shared `z`.
pub fn noise_field(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = SplitMix64::new(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.standard_normal())
}

/// Copy of `table` with additive Gaussian noise on every performance label.
pub fn inject_noise(table: &RoutingTable, cfg: NoiseConfig) -> Result<RoutingTable> {
    if !(cfg.sigma.is_finite() && cfg.sigma >= 0.0) {
        return Err(Error::Invalid(format!(
            "noise sigma must be nonnegative, got {}",
            cfg.sigma
        )));
    }
    if cfg.sigma == 0.0 {
        return Ok(table.clone());
    }
    let z = noise_field(table.n_queries(), table.n_models(), cfg.seed);
    let perf = Matrix::from_fn(table.n_queries(), table.n_models(), |n, j| {
        table.perf().get(n, j) + cfg.sigma * z.get(n, j)
    });
    table.with_perf(perf)
}

/// Monte-Carlo selection frequencies of `argmax(a + eps)` with i.i.d.
/// `N(0, sigma^2)` noise per model.
pub fn mc_selection_frequencies(a: &[f64], sigma: f64, trials: usize, seed: u64) -> Result<Vec<f64>> {
    if a.is_empty() {
        return Err(Error::Invalid("empty performance vector".into()));
    }
    if trials == 0 {
        return Err(Error::Invalid("trials must be at least 1".into()));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::Invalid(format!("sigma must be nonnegative, got {sigma}")));
    }
    let mut rng = SplitMix64::new(seed);
    let mut counts = vec![0usize; a.len()];
    for _ in 0..trials {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (j, &mean) in a.iter().enumerate() {
            let v = mean + sigma * rng.standard_normal();
            if v > best_val {
                best_val = v;
                best = j;
            }
        }
        counts[best] += 1;
    }
    Ok(counts.into_iter().map(|c| c as f64 / trials as f64).collect())
}

/// Binomial standard error of a Monte-Carlo frequency.
pub fn frequency_stderr(p: f64, trials: usize) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}
