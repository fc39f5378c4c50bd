use super::Parameters;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Flat index of the worst coordinate.
    pub worst_index: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Denominator floor for relative errors, so coordinates whose true
/// gradient is ~0 are judged on absolute error instead.
const REL_FLOOR: f64 = 1e-6;

/// Compares `analytic` against `(L(p + h e_i) - L(p - h e_i)) / 2h` for every
/// coordinate, or for `sample = Some((count, seed))` randomly chosen ones.
pub fn grad_check<P, G, F>(
    params: &P,
    analytic: &G,
    loss: F,
    h: f64,
    tol: f64,
    sample: Option<(usize, u64)>,
) -> Result<GradCheckReport>
where
    P: Parameters + Clone,
    G: Parameters,
    F: Fn(&P) -> f64,
{
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Invalid(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let flat_grad = analytic.flatten();
    let total = params.param_count();
    if flat_grad.len() != total {
        return Err(Error::Shape(format!(
            "analytic gradient has {} entries, parameters have {total}",
            flat_grad.len()
        )));
    }

    let indices: Vec<usize> = match sample {
        Some((count, seed)) if count < total => {
            let mut all: Vec<usize> = (0..total).collect();
            SplitMix64::new(seed).shuffle(&mut all);
            all.truncate(count);
            all.sort_unstable();
            all
        }
        _ => (0..total).collect(),
    };

    let base = params.flatten();
    let mut probe = params.clone();
    let mut eval_at = |values: &[f64]| -> Result<f64> {
        probe.load_flat(values)?;
        let l = loss(&probe);
        if l.is_finite() {
            Ok(l)
        } else {
            Err(Error::Numeric("loss is not finite during gradient check".into()))
        }
    };
    eval_at(&base)?;

    let mut worst = 0.0;
    let mut worst_index = 0;
    let mut shifted = base.clone();
    for &i in &indices {
        shifted[i] = base[i] + h;
        let up = eval_at(&shifted)?;
        shifted[i] = base[i] - h;
        let down = eval_at(&shifted)?;
        shifted[i] = base[i];

        let numeric = (up - down) / (2.0 * h);
        let exact = flat_grad[i];
        let rel = (numeric - exact).abs() / numeric.abs().max(exact.abs()).max(REL_FLOOR);
        if rel > worst {
            worst = rel;
            worst_index = i;
        }
    }

    Ok(GradCheckReport {
        checked: indices.len(),
        max_rel_error: worst,
        worst_index,
        tolerance: tol,
    })
}
