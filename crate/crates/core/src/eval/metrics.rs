use serde::{Serialize, Serializer};

use super::SweepCurve;
use crate::dataset::RoutingTable;
use crate::error::{Error, Result};

/// `(mean_cost, mean_perf)` pairs with equal-cost points merged, keeping the
/// best performance.
pub fn merged_points(curve: &SweepCurve) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(curve.points.len());
    for p in &curve.points {
        match out.last_mut() {
            Some(last) if last.0 == p.mean_cost => last.1 = last.1.max(p.mean_perf),
            _ => out.push((p.mean_cost, p.mean_perf)),
        }
    }
    out
}

/// Trapezoidal area under `points` (sorted by x) divided by the x range.
pub fn nauc_points(points: &[(f64, f64)]) -> Result<f64> {
    let (Some(first), Some(last)) = (points.first(), points.last()) else {
        return Err(Error::DegenerateCostRange);
    };
    let range = last.0 - first.0;
    if range.is_nan() || range <= 0.0 {
        return Err(Error::DegenerateCostRange);
    }
    let area: f64 = points
        .windows(2)
        .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
        .sum();
    Ok(area / range)
}

pub fn nauc(curve: &SweepCurve) -> Result<f64> {
    nauc_points(&merged_points(curve))
}

/// Highest mean performance on the curve and the lowest cost reaching it.
pub fn peak_score(curve: &SweepCurve) -> Result<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for p in &curve.points {
        let better = match best {
            None => true,
            Some((y, x)) => p.mean_perf > y || (p.mean_perf == y && p.mean_cost < x),
        };
        if better {
            best = Some((p.mean_perf, p.mean_cost));
        }
    }
    best.ok_or_else(|| Error::Invalid("peak score of an empty curve".into()))
}

/// Best single model on a query set: its mean performance, mean cost and index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Standalone {
    pub a_max: f64,
    pub x_max: f64,
    pub j_max: usize,
}

/// Ties in mean performance go to the lowest model index.
pub fn strongest_model(table: &RoutingTable, queries: &[usize]) -> Result<Standalone> {
    if queries.is_empty() {
        return Err(Error::Invalid("strongest model over an empty split".into()));
    }
    let k = table.n_models();
    let len = queries.len() as f64;
    let mut perf = vec![0.0; k];
    let mut cost = vec![0.0; k];
    for &n in queries {
        for j in 0..k {
            perf[j] += table.perf().get(n, j);
            cost[j] += table.cost().get(n, j);
        }
    }
    let mut j_max = 0;
    for j in 1..k {
        if perf[j] / len > perf[j_max] / len {
            j_max = j;
        }
    }
    Ok(Standalone {
        a_max: perf[j_max] / len,
        x_max: cost[j_max] / len,
        j_max,
    })
}

/// Smallest curve cost whose performance reaches `a_max`, or `None`.
pub fn qnc(curve: &SweepCurve, a_max: f64) -> Option<f64> {
    merged_points(curve)
        .into_iter()
        .find(|&(_, y)| y >= a_max)
        .map(|(x, _)| x)
}

fn sentinel<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) => s.serialize_f64(*x),
        None => s.serialize_str("/"),
    }
}

/// Metric bundle for one curve. Unreached QNC values serialize as `"/"`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsSummary {
    pub nauc: f64,
    pub peak_score: f64,
    pub peak_cost: f64,
    #[serde(serialize_with = "sentinel")]
    pub qnc: Option<f64>,
    #[serde(serialize_with = "sentinel")]
    pub qnc_relative: Option<f64>,
    pub rci: f64,
    pub a_max: f64,
    pub x_max: f64,
    pub j_max: usize,
}

impl MetricsSummary {
    pub fn compute(curve: &SweepCurve, table: &RoutingTable, queries: &[usize], rci: f64) -> Result<Self> {
        let best = strongest_model(table, queries)?;
        let (peak_score, peak_cost) = peak_score(curve)?;
        let qnc = qnc(curve, best.a_max);
        Ok(Self {
            nauc: nauc(curve)?,
            peak_score,
            peak_cost,
            qnc,
            qnc_relative: qnc.map(|x| x / best.x_max),
            rci,
            a_max: best.a_max,
            x_max: best.x_max,
            j_max: best.j_max,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metrics serialize");
        s.push('\n');
        s
    }
}
