//! CSV renderings of evaluation results. Floats use the shortest
//! representation that parses back to the same value.

use std::fmt::Write;

use super::{call_rate_curve, CollapseReport, NoisePoint, SweepCurve};

pub fn curve_csv(curve: &SweepCurve) -> String {
    let mut out = String::from("budget,mean_cost,mean_perf");
    for j in 0..curve.n_models() {
        let _ = write!(out, ",calls_model_{j}");
    }
    out.push_str(",clamped\n");
    for p in &curve.points {
        let _ = write!(out, "{},{},{}", p.budget, p.mean_cost, p.mean_perf);
        for c in &p.calls {
            let _ = write!(out, ",{c}");
        }
        let _ = writeln!(out, ",{}", p.clamped);
    }
    out
}

pub fn callrates_csv(curve: &SweepCurve) -> String {
    let mut out = String::from("budget,mean_cost");
    for j in 0..curve.n_models() {
        let _ = write!(out, ",share_model_{j}");
    }
    out.push('\n');
    for (p, shares) in curve.points.iter().zip(call_rate_curve(curve)) {
        let _ = write!(out, "{},{}", p.budget, p.mean_cost);
        for s in shares {
            let _ = write!(out, ",{s}");
        }
        out.push('\n');
    }
    out
}

pub fn rci_detail_csv(report: &CollapseReport) -> String {
    let mut out = String::from("n,m_n,a_sel,a_star,X_n,K_n,s_n\n");
    for r in &report.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.n, r.m_n, r.a_sel, r.a_star, r.x_n, r.k_n, r.s_n
        );
    }
    out
}

pub fn noise_csv(points: &[NoisePoint]) -> String {
    let mut out = String::from("sigma,accuracy,strongest_share\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.sigma, p.accuracy, p.strongest_share);
    }
    out
}
