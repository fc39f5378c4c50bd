//! Ordered preference pairs and the pairwise logistic ranking loss.

use crate::error::{Error, Result};

/// Ordered pairs `(i, j)` meaning model `i` must outrank model `j`: either
/// it performs strictly better, or equally well at strictly lower cost.
pub fn build_pairs(perf: &[f64], cost: &[f64]) -> Vec<(usize, usize)> {
    assert_eq!(perf.len(), cost.len(), "perf and cost rows differ in length");
    let k = perf.len();
    let mut pairs = Vec::new();
    for i in 0..k {
        for j in 0..k {
            if i != j && (perf[i] > perf[j] || (perf[i] == perf[j] && cost[i] < cost[j])) {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// `log(1 + exp(x))` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean of `log(1 + exp(-(s_i - s_j)))` over `pairs`; `None` for an empty set.
pub fn ranking_loss(scores: &[f64], pairs: &[(usize, usize)]) -> Result<Option<f64>> {
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Numeric(format!("non-finite score {bad}")));
    }
    if pairs.is_empty() {
        return Ok(None);
    }
    let total: f64 = pairs.iter().map(|&(i, j)| softplus(-(scores[i] - scores[j]))).sum();
    Ok(Some(total / pairs.len() as f64))
}

/// Ranking loss and its gradient w.r.t. the scores, with the gradient scaled
/// by `weight` and added into `grad`. Returns `None` for an empty pair set.
pub(crate) fn ranking_loss_grad(
    scores: &[f64],
    pairs: &[(usize, usize)],
    weight: f64,
    grad: &mut [f64],
) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let inv = 1.0 / pairs.len() as f64;
    let mut total = 0.0;
    for &(i, j) in pairs {
        let diff = scores[i] - scores[j];
        total += softplus(-diff);
        // d/d diff of softplus(-diff) = -sigmoid(-diff)
        let g = sigmoid(-diff) * inv * weight;
        grad[i] -= g;
        grad[j] += g;
    }
    Some(total * inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    #[test]
    fn pair_examples() {
        let got: BTreeSet<_> = build_pairs(&[1.0, 1.0, 0.0], &[2.0, 1.0, 1.0]).into_iter().collect();
        let want: BTreeSet<_> = [(0, 2), (1, 2), (1, 0)].into_iter().collect();
        assert_eq!(got, want);
        assert!(build_pairs(&[0.5; 3], &[1.0; 3]).is_empty());
        assert_eq!(build_pairs(&[0.0, 1.0], &[5.0, 9.0]), vec![(1, 0)]);
    }

    #[test]
    fn loss_examples() {
        let l = ranking_loss(&[0.3, 0.3, 0.3], &[(0, 1), (2, 1)]).unwrap().unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        let l = ranking_loss(&[2.0, 0.0], &[(0, 1)]).unwrap().unwrap();
        assert!((l - (1.0 + (-2.0f64).exp()).ln()).abs() < 1e-15);
        assert!((l - 0.126928).abs() < 1e-6);
        let l = ranking_loss(&[50.0, 0.0], &[(0, 1)]).unwrap().unwrap();
        assert!(l.is_finite() && l < 1e-21 && l > 0.0);
        let l = ranking_loss(&[-1000.0, 0.0], &[(0, 1)]).unwrap().unwrap();
        assert!((l - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn empty_pairs_and_bad_scores() {
        assert_eq!(ranking_loss(&[1.0], &[]).unwrap(), None);
        assert!(ranking_loss(&[f64::NAN, 0.0], &[(0, 1)]).is_err());
    }

    #[test]
    fn gradient_matches_differences() {
        let s = [0.4, -1.3, 2.2, 0.0];
        let pairs = [(0, 1), (2, 1), (2, 0), (3, 1)];
        let mut g = [0.0; 4];
        ranking_loss_grad(&s, &pairs, 1.0, &mut g).unwrap();
        for i in 0..4 {
            let mut up = s;
            up[i] += 1e-6;
            let mut down = s;
            down[i] -= 1e-6;
            let fd =
                (ranking_loss(&up, &pairs).unwrap().unwrap() - ranking_loss(&down, &pairs).unwrap().unwrap()) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn shift_invariance(scores in proptest::collection::vec(-20.0f64..20.0, 4), shift in -100.0f64..100.0) {
            let pairs = [(0, 1), (1, 2), (3, 0)];
            let base = ranking_loss(&scores, &pairs).unwrap().unwrap();
            let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
            let moved = ranking_loss(&shifted, &pairs).unwrap().unwrap();
            prop_assert!((base - moved).abs() < 1e-9 * (1.0 + base));
        }

        #[test]
        fn pairs_are_antisymmetric(perf in proptest::collection::vec(0u8..3, 2..7), cost in proptest::collection::vec(1u8..4, 7)) {
            let perf: Vec<f64> = perf.into_iter().map(f64::from).collect();
            let cost: Vec<f64> = cost[..perf.len()].iter().map(|&c| f64::from(c)).collect();
            let pairs = build_pairs(&perf, &cost);
            for &(i, j) in &pairs {
                prop_assert!(i != j);
                prop_assert!(!pairs.contains(&(j, i)));
            }
        }
    }
}
