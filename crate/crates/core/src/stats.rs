//! Welch's two-sample t-test and rank-based AUC.

use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::synth::GroundTruth;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    /// two-sided
    pub p: f64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Unequal-variance t statistic with Welch-Satterthwaite degrees of freedom.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::DegenerateSamples(format!(
            "need at least 2 values per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::DegenerateSamples("non-finite value".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let sa = va / a.len() as f64;
    let sb = vb / b.len() as f64;
    if sa + sb == 0.0 {
        return Err(Error::DegenerateSamples("both samples have zero variance".into()));
    }
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    let p = beta_reg(df / 2.0, 0.5, df / (df + t * t));
    Ok(TTest { t, df, p })
}

/// Area under the ROC curve of `scores` against binary `positive`, with
/// tied scores sharing their midrank. `None` when either class is empty.
pub fn auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positive.len());
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start..end (1-based: start+1..=end)
        let mid = (start + 1 + end) as f64 / 2.0;
        rank_sum += mid * order[start..end].iter().filter(|&&i| positive[i]).count() as f64;
        start = end;
    }
    let np = n_pos as f64;
    Some((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// AUC of per-arc scores pooled over all graphs against the motif arcs.
pub fn attention_recovery_auc(alpha_edge: &[Vec<f64>], truth: &GroundTruth) -> Option<f64> {
    assert_eq!(alpha_edge.len(), truth.len(), "scores and truth cover different graphs");
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (k, a) in alpha_edge.iter().enumerate() {
        scores.extend_from_slice(a);
        labels.extend(truth.arc_indicator(k, a.len()));
    }
    auc(&scores, &labels)
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use statrs::function::gamma::ln_gamma;

    use super::*;

    /// Two-sided tail of Student's t by Simpson quadrature of the density.
    fn quadrature_p(t: f64, df: f64) -> f64 {
        let log_c = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
        let f = |x: f64| (log_c - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
        let n = 200_000;
        let h = t.abs() / n as f64;
        let mut s = f(0.0) + f(t.abs());
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        1.0 - 2.0 * s * h / 3.0
    }

    #[test]
    fn identical_samples() {
        let r = welch_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.t, 0.0);
        assert_abs_diff_eq!(r.p, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_variances_rejected() {
        let e = welch_t_test(&[0.0; 4], &[1.0; 4]).unwrap_err();
        assert!(matches!(e, Error::DegenerateSamples(_)));
        assert!(e.to_string().contains("degenerate samples"));
        assert!(welch_t_test(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn shifted_samples_match_quadrature() {
        let r = welch_t_test(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_abs_diff_eq!(r.t, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.df, 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.p, quadrature_p(r.t, r.df), epsilon = 1e-6);
    }

    #[test]
    fn unequal_variances_match_quadrature() {
        let a = [0.61, 0.64, 0.7, 0.66, 0.69];
        let b = [0.5, 0.52, 0.47, 0.55, 0.49, 0.5];
        let r = welch_t_test(&a, &b).unwrap();
        assert!(r.df > 4.0 && r.df < 9.0);
        assert_abs_diff_eq!(r.p, quadrature_p(r.t, r.df), epsilon = 1e-6);
    }

    fn brute_auc(scores: &[f64], positive: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if positive[i] && !positive[j] {
                    pairs += 1.0;
                    wins += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn auc_cases() {
        let truth = [true, false, true, false, false];
        assert_eq!(auc(&[0.3; 5], &truth), Some(0.5));
        assert_eq!(auc(&[1.0, 0.0, 1.0, 0.0, 0.0], &truth), Some(1.0));
        assert_eq!(auc(&[0.0, 1.0, 0.0, 1.0, 1.0], &truth), Some(0.0));
        assert_eq!(auc(&[0.1, 0.2], &[true, true]), None);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let scores: Vec<f64> = (0..20).map(|_| (rng.random::<f64>() * 5.0).floor()).collect();
        let labels: Vec<bool> = (0..20).map(|i| i % 3 == 0).collect();
        assert_abs_diff_eq!(auc(&scores, &labels).unwrap(), brute_auc(&scores, &labels), epsilon = 1e-12);
    }

    #[test]
    fn pooled_recovery() {
        let truth = GroundTruth {
            nodes: vec![vec![0, 1], vec![0, 1]],
            arcs: vec![vec![0, 1], vec![2]],
        };
        let scores = vec![vec![0.9, 0.8, 0.1], vec![0.2, 0.3, 0.7, 0.05]];
        assert_eq!(attention_recovery_auc(&scores, &truth), Some(1.0));
    }

    proptest! {
        #[test]
        fn welch_antisymmetric(a in proptest::collection::vec(-5.0f64..5.0, 2..8),
                               b in proptest::collection::vec(-5.0f64..5.0, 2..8)) {
            if let (Ok(x), Ok(y)) = (welch_t_test(&a, &b), welch_t_test(&b, &a)) {
                prop_assert_eq!(x.t, -y.t);
                prop_assert_eq!(x.p, y.p);
                prop_assert!((0.0..=1.0).contains(&x.p));
            }
        }

        #[test]
        fn auc_monotone_invariant(scores in proptest::collection::vec(-3.0f64..3.0, 10),
                                  mask in proptest::collection::vec(any::<bool>(), 10)) {
            let base = auc(&scores, &mask);
            let mapped: Vec<f64> = scores.iter().map(|s| (2.0 * s).exp() + 1.0).collect();
            prop_assert_eq!(base, auc(&mapped, &mask));
            if let Some(v) = base {
                prop_assert!((v - brute_auc(&scores, &mask)).abs() < 1e-12);
            }
        }
    }
}
