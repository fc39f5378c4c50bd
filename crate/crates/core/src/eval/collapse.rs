use serde::Serialize;

use crate::dataset::RoutingTable;
use crate::error::{Error, Result};

/// Collapse bookkeeping for one query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollapseRecord {
    pub n: usize,
    pub m_n: usize,
    pub a_sel: f64,
    pub a_star: f64,
    /// Number of models strictly cheaper than the selection.
    pub x_n: usize,
    /// Strictly cheaper models performing at least as well as the selection.
    pub k_n: usize,
    pub s_n: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseReport {
    pub records: Vec<CollapseRecord>,
    pub rci: f64,
    pub call_rates: Vec<f64>,
}

/// Routing collapse index of `selections[i]` made for query `queries[i]`.
///
/// A selection scores 1 when it is not performance-optimal over the whole
/// pool; otherwise it scores the fraction of strictly cheaper models that
/// match it (0 when nothing is cheaper). Performance comparisons are exact.
pub fn rci(table: &RoutingTable, queries: &[usize], selections: &[usize]) -> Result<CollapseReport> {
    if queries.len() != selections.len() {
        return Err(Error::Shape(format!(
            "{} selections for {} queries",
            selections.len(),
            queries.len()
        )));
    }
    if queries.is_empty() {
        return Err(Error::Invalid("collapse index over an empty split".into()));
    }
    let k = table.n_models();
    let mut calls = vec![0usize; k];
    let mut records = Vec::with_capacity(queries.len());
    for (&n, &m) in queries.iter().zip(selections) {
        if m >= k {
            return Err(Error::Invalid(format!(
                "selection {m} out of range for {k} models (query {n})"
            )));
        }
        let a = table.perf_row(n);
        let c = table.cost_row(n);
        let a_star = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let cheaper: Vec<usize> = (0..k).filter(|&j| c[j] < c[m]).collect();
        let k_n = cheaper.iter().filter(|&&j| a[j] >= a[m]).count();
        let s_n = if a[m] < a_star {
            1.0
        } else if !cheaper.is_empty() {
            k_n as f64 / cheaper.len() as f64
        } else {
            0.0
        };
        calls[m] += 1;
        records.push(CollapseRecord {
            n,
            m_n: m,
            a_sel: a[m],
            a_star,
            x_n: cheaper.len(),
            k_n,
            s_n,
        });
    }
    let len = queries.len() as f64;
    let rci = records.iter().map(|r| r.s_n).sum::<f64>() / len;
    Ok(CollapseReport {
        records,
        rci,
        call_rates: calls.iter().map(|&c| c as f64 / len).collect(),
    })
}
