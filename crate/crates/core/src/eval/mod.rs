//! Budget sweeps, curve metrics and collapse diagnostics.

mod collapse;
mod metrics;
mod report;

use rayon::prelude::*;

pub use collapse::{rci, CollapseRecord, CollapseReport};
pub use metrics::{merged_points, nauc, nauc_points, peak_score, qnc, strongest_model, MetricsSummary, Standalone};
pub use report::{callrates_csv, curve_csv, noise_csv, rci_detail_csv};

use crate::dataset::{RoutingTable, SplitIndices};
use crate::error::{Error, Result};
use crate::oracle::noise_field;
use crate::router::{decide, filter_costs, CostPredictor, CostSource, Router};

/// Evenly spaced budgets from the smallest per-query minimum cost to the
/// largest single cost over `queries`, both endpoints included.
pub fn budget_grid(table: &RoutingTable, queries: &[usize], n_points: usize) -> Result<Vec<f64>> {
    if n_points < 2 {
        return Err(Error::Invalid(format!(
            "budget grid needs at least 2 points, got {n_points}"
        )));
    }
    if queries.is_empty() {
        return Err(Error::Invalid("budget grid over an empty split".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &n in queries {
        let row = table.cost_row(n);
        lo = lo.min(row.iter().copied().fold(f64::INFINITY, f64::min));
        hi = hi.max(row.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    let step = (hi - lo) / (n_points - 1) as f64;
    Ok((0..n_points)
        .map(|t| if t == n_points - 1 { hi } else { lo + step * t as f64 })
        .collect())
}

/// Budget-independent routing inputs for a set of queries: each router's
/// scores and the costs its feasibility filter sees.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingInputs {
    pub queries: Vec<usize>,
    pub scores: Vec<Vec<f64>>,
    pub filter_costs: Vec<Vec<f64>>,
}

impl RoutingInputs {
    /// Scores every query once. The oracle router always filters on true costs.
    pub fn prepare(
        router: &Router,
        predictor: Option<&CostPredictor>,
        table: &RoutingTable,
        queries: &[usize],
        source: CostSource,
    ) -> Result<Self> {
        router.check_compatible(table)?;
        let source = if matches!(router, Router::Oracle) {
            CostSource::Oracle
        } else {
            source
        };
        let rows: Vec<(Vec<f64>, Vec<f64>)> = queries
            .par_iter()
            .map(|&n| {
                let s = router.scores(table, n)?;
                if s.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numeric(format!("non-finite score for query {n}")));
                }
                Ok((s, filter_costs(table, n, source, predictor)?))
            })
            .collect::<Result<_>>()?;
        let (scores, filter_costs) = rows.into_iter().unzip();
        Ok(Self {
            queries: queries.to_vec(),
            scores,
            filter_costs,
        })
    }

    /// Hand-built inputs; `scores` and `filter_costs` are indexed like `queries`.
    pub fn from_parts(queries: Vec<usize>, scores: Vec<Vec<f64>>, filter_costs: Vec<Vec<f64>>) -> Result<Self> {
        if scores.len() != queries.len() || filter_costs.len() != queries.len() {
            return Err(Error::Shape("routing inputs must have one row per query".into()));
        }
        Ok(Self {
            queries,
            scores,
            filter_costs,
        })
    }

    /// Chosen model and clamp flag per query at `budget`.
    pub fn decisions(&self, budget: f64) -> Vec<(usize, bool)> {
        self.scores
            .iter()
            .zip(&self.filter_costs)
            .map(|(s, c)| decide(s, c, budget))
            .collect()
    }

    pub fn selections(&self, budget: f64) -> Vec<usize> {
        self.decisions(budget).into_iter().map(|(m, _)| m).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub budget: f64,
    pub mean_cost: f64,
    pub mean_perf: f64,
    pub calls: Vec<usize>,
    pub clamped: usize,
}

/// Performance–cost curve, points sorted by mean realized cost, then budget.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub points: Vec<CurvePoint>,
}

impl SweepCurve {
    pub fn n_models(&self) -> usize {
        self.points.first().map_or(0, |p| p.calls.len())
    }

    /// The point evaluated at `budget`, if that budget was swept.
    pub fn at_budget(&self, budget: f64) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.budget == budget)
    }
}

fn point_at(inputs: &RoutingInputs, table: &RoutingTable, budget: f64) -> CurvePoint {
    let k = table.n_models();
    let mut calls = vec![0usize; k];
    let mut clamped = 0;
    let (mut cost, mut perf) = (0.0, 0.0);
    for (&n, (m, c)) in inputs.queries.iter().zip(inputs.decisions(budget)) {
        calls[m] += 1;
        clamped += usize::from(c);
        cost += table.cost().get(n, m);
        perf += table.perf().get(n, m);
    }
    let len = inputs.queries.len() as f64;
    CurvePoint {
        budget,
        mean_cost: cost / len,
        mean_perf: perf / len,
        calls,
        clamped,
    }
}

/// Evaluates prepared inputs at every budget. Realized cost and performance
/// always come from the table.
pub fn sweep_inputs(inputs: &RoutingInputs, table: &RoutingTable, grid: &[f64]) -> Result<SweepCurve> {
    if grid.is_empty() {
        return Err(Error::Invalid("empty budget grid".into()));
    }
    if inputs.queries.is_empty() {
        return Err(Error::Invalid("sweep over an empty split".into()));
    }
    let mut points: Vec<CurvePoint> = grid.par_iter().map(|&c| point_at(inputs, table, c)).collect();
    points.sort_by(|a, b| a.mean_cost.total_cmp(&b.mean_cost).then(a.budget.total_cmp(&b.budget)));
    Ok(SweepCurve { points })
}

pub fn sweep(
    router: &Router,
    predictor: Option<&CostPredictor>,
    table: &RoutingTable,
    queries: &[usize],
    grid: &[f64],
    source: CostSource,
) -> Result<SweepCurve> {
    let inputs = RoutingInputs::prepare(router, predictor, table, queries, source)?;
    sweep_inputs(&inputs, table, grid)
}

/// Per-point call shares; each row sums to 1.
pub fn call_rate_curve(curve: &SweepCurve) -> Vec<Vec<f64>> {
    curve
        .points
        .iter()
        .map(|p| {
            let total: usize = p.calls.iter().sum();
            p.calls.iter().map(|&c| c as f64 / total as f64).collect()
        })
        .collect()
}

/// Curve, metrics and collapse report for one router on one query set.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub grid: Vec<f64>,
    pub curve: SweepCurve,
    pub collapse: CollapseReport,
    pub metrics: MetricsSummary,
}

/// Sweeps a `grid_points` budget grid and computes every metric; RCI uses the
/// selections at unconstrained budget.
pub fn evaluate(
    router: &Router,
    predictor: Option<&CostPredictor>,
    table: &RoutingTable,
    queries: &[usize],
    grid_points: usize,
    source: CostSource,
) -> Result<Evaluation> {
    let grid = budget_grid(table, queries, grid_points)?;
    let inputs = RoutingInputs::prepare(router, predictor, table, queries, source)?;
    let curve = sweep_inputs(&inputs, table, &grid)?;
    let collapse = rci(table, queries, &inputs.selections(f64::INFINITY))?;
    let metrics = MetricsSummary::compute(&curve, table, queries, collapse.rci)?;
    Ok(Evaluation {
        grid,
        curve,
        collapse,
        metrics,
    })
}

/// Trains on every query and evaluates on the same queries.
pub fn training_set_eval<F>(
    table: &RoutingTable,
    train: F,
    grid_points: usize,
    source: CostSource,
) -> Result<Evaluation>
where
    F: FnOnce(&RoutingTable, &SplitIndices) -> Result<(Router, Option<CostPredictor>)>,
{
    let full = SplitIndices::full(table.n_queries());
    let (router, predictor) = train(table, &full)?;
    evaluate(&router, predictor.as_ref(), table, &full.train, grid_points, source)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisePoint {
    pub sigma: f64,
    pub accuracy: f64,
    pub strongest_share: f64,
}

/// Index of the model with the highest mean cost over `queries` (lowest index on ties).
pub fn most_expensive_model(table: &RoutingTable, queries: &[usize]) -> usize {
    let k = table.n_models();
    let mut sums = vec![0.0; k];
    for &n in queries {
        for (s, c) in sums.iter_mut().zip(table.cost_row(n)) {
            *s += c;
        }
    }
    let mut best = 0;
    for j in 1..k {
        if sums[j] > sums[best] {
            best = j;
        }
    }
    best
}

/// Routes with the noisy oracle `argmax_j a + sigma * z` over the true-cost
/// feasible set. The same standard-normal field `z` (drawn from `seed`) is
/// reused for every sigma, so curves differ only through the noise scale.
pub fn noise_sensitivity(
    table: &RoutingTable,
    queries: &[usize],
    sigmas: &[f64],
    budget: f64,
    seed: u64,
) -> Result<Vec<NoisePoint>> {
    if queries.is_empty() {
        return Err(Error::Invalid("noise sensitivity over an empty split".into()));
    }
    if let Some(s) = sigmas.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(Error::Invalid(format!(
            "noise sigma must be finite and nonnegative, got {s}"
        )));
    }
    if budget.is_nan() || budget <= 0.0 {
        return Err(Error::Invalid(format!("budget must be positive, got {budget}")));
    }
    let z = noise_field(table.n_queries(), table.n_models(), seed);
    let strongest = most_expensive_model(table, queries);
    let len = queries.len() as f64;
    Ok(sigmas
        .par_iter()
        .map(|&sigma| {
            let (mut acc, mut hits) = (0.0, 0usize);
            let mut noisy = vec![0.0; table.n_models()];
            for &n in queries {
                for ((v, a), e) in noisy.iter_mut().zip(table.perf_row(n)).zip(z.row(n)) {
                    *v = a + sigma * e;
                }
                let (m, _) = decide(&noisy, table.cost_row(n), budget);
                acc += table.perf().get(n, m);
                hits += usize::from(m == strongest);
            }
            NoisePoint {
                sigma,
                accuracy: acc / len,
                strongest_share: hits as f64 / len,
            }
        })
        .collect())
}
