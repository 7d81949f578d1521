//! Training objective: cross-entropy on the causal branch, KL-to-uniform on
//! the trivial branch, and the random-pairing intervention loss.
//!
//! All three terms are batch means rather than sums, so the weights
//! `lambda1`/`lambda2` do not depend on the batch size.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ParamSet, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::Linear;

/// `mean_k -log softmax(logits_k)[label_k]`
pub fn ce_loss(tape: &mut Tape, logits: Var, labels: Arc<[usize]>) -> Var {
    let lp = tape.log_softmax_rows(logits);
    let picked = tape.pick(lp, labels);
    let m = tape.mean(picked);
    tape.scale(m, -1.0)
}

/// `mean_k KL(softmax(logits_k) || U) = mean_k sum_c p_c (log p_c + ln C)`
pub fn kl_uniform_loss(tape: &mut Tape, logits: Var) -> Var {
    let [rows, classes] = tape.value(logits).shape();
    let lp = tape.log_softmax_rows(logits);
    let p = tape.softmax_rows(logits);
    let shifted = tape.add_scalar(lp, (classes as f64).ln());
    let terms = tape.mul(p, shifted);
    let s = tape.sum(terms);
    tape.scale(s, 1.0 / rows as f64)
}

/// Mean cross-entropy of `classifier(h_c[k] + h_t[k'])` against `labels[k]`
/// over the pairs of `plan`.
pub fn backdoor_loss(
    tape: &mut Tape,
    b: &crate::autodiff::Bindings,
    h_c: Var,
    h_t: Var,
    labels: &[usize],
    classifier: &Linear,
    plan: &PairingPlan,
) -> Result<Var> {
    let batch = tape.value(h_c).rows();
    plan.validate(batch)?;
    let ks: Arc<[usize]> = plan.pairs.iter().map(|p| p.0).collect();
    let kps: Arc<[usize]> = plan.pairs.iter().map(|p| p.1).collect();
    let targets: Arc<[usize]> = ks.iter().map(|&k| labels[k]).collect();
    let gc = tape.gather_rows(h_c, ks);
    let gt = tape.gather_rows(h_t, kps);
    let mixed = tape.add(gc, gt);
    let logits = classifier.forward(tape, b, mixed)?;
    Ok(ce_loss(tape, logits, targets))
}

/// Scalar breakdown of the total objective.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub ce: f64,
    pub kl: f64,
    pub ba: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub total: f64,
}

/// Loss weights. Setting a weight to zero removes that term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lambdas {
    pub kl: f64,
    pub ba: f64,
}

impl Lambdas {
    pub fn new(kl: f64, ba: f64) -> Result<Self> {
        if !(kl >= 0.0 && ba >= 0.0 && kl.is_finite() && ba.is_finite()) {
            return Err(Error::Config(format!(
                "loss weights must be finite and non-negative, got lambda1={kl}, lambda2={ba}"
            )));
        }
        Ok(Self { kl, ba })
    }
}

impl Default for Lambdas {
    fn default() -> Self {
        Self { kl: 0.5, ba: 0.5 }
    }
}

/// `ce + lambda1 kl + lambda2 ba` on the tape.
pub fn total_loss(tape: &mut Tape, ce: Var, kl: Var, ba: Var, lambdas: Lambdas) -> Var {
    let wk = tape.scale(kl, lambdas.kl);
    let wb = tape.scale(ba, lambdas.ba);
    let t = tape.add(ce, wk);
    tape.add(t, wb)
}

impl LossBreakdown {
    /// Assembles the total from already-evaluated terms.
    pub fn assemble(ce: f64, kl: f64, ba: f64, lambdas: Lambdas) -> Result<Self> {
        if !(ce.is_finite() && kl.is_finite() && ba.is_finite()) {
            return Err(Error::Config("loss terms must be finite".into()));
        }
        Ok(Self {
            ce,
            kl,
            ba,
            lambda1: lambdas.kl,
            lambda2: lambdas.ba,
            total: ce + lambdas.kl * kl + lambdas.ba * ba,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum PairingMode {
    /// one random permutation of the batch per step
    #[default]
    Permutation,
    /// every ordered pair `(k, k')`
    Full,
}

impl fmt::Display for PairingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PairingMode::Permutation => "perm",
            PairingMode::Full => "full",
        })
    }
}

impl FromStr for PairingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perm" | "permutation" => Ok(PairingMode::Permutation),
            "full" => Ok(PairingMode::Full),
            other => Err(Error::Config(format!("unknown pairing mode `{other}`"))),
        }
    }
}

/// Which trivial representation each causal representation is added to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairingPlan {
    pub mode: PairingMode,
    /// `(causal index k, trivial index k')`
    pub pairs: Vec<(usize, usize)>,
}

impl PairingPlan {
    pub fn identity(batch_size: usize) -> Self {
        Self {
            mode: PairingMode::Permutation,
            pairs: (0..batch_size).map(|k| (k, k)).collect(),
        }
    }

    pub fn validate(&self, batch_size: usize) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::Config("empty pairing plan".into()));
        }
        if self.pairs.iter().any(|&(k, kp)| k >= batch_size || kp >= batch_size) {
            return Err(Error::Config(format!("pairing plan out of range for batch of {batch_size}")));
        }
        Ok(())
    }
}

/// Draws a pairing plan. With `exclude_self`, pairs `(k, k)` are avoided
/// whenever the batch has more than one sample.
pub fn plan_pairing<R: Rng + ?Sized>(batch_size: usize, mode: PairingMode, exclude_self: bool, rng: &mut R) -> PairingPlan {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let avoid = exclude_self && batch_size > 1;
    let pairs = match mode {
        PairingMode::Full => (0..batch_size)
            .flat_map(|k| (0..batch_size).map(move |kp| (k, kp)))
            .filter(|&(k, kp)| !avoid || k != kp)
            .collect(),
        PairingMode::Permutation => {
            let mut perm: Vec<usize> = (0..batch_size).collect();
            perm.shuffle(rng);
            if avoid {
                // rejection sampling of a derangement; expected ~e draws
                while perm.iter().enumerate().any(|(k, &p)| k == p) {
                    perm.shuffle(rng);
                }
            }
            perm.into_iter().enumerate().collect()
        }
    };
    PairingPlan { mode, pairs }
}

pub fn plan_pairing_seeded(batch_size: usize, mode: PairingMode, exclude_self: bool, seed: u64) -> PairingPlan {
    plan_pairing(batch_size, mode, exclude_self, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Cross-entropy of concrete logits.
pub fn ce_loss_value(logits: &Tensor, labels: &[usize]) -> f64 {
    let mut tape = Tape::new();
    let l = tape.constant(logits.clone());
    let v = ce_loss(&mut tape, l, labels.into());
    tape.value(v).item()
}

/// KL-to-uniform of concrete logits.
pub fn kl_uniform_loss_value(logits: &Tensor) -> f64 {
    let mut tape = Tape::new();
    let l = tape.constant(logits.clone());
    let v = kl_uniform_loss(&mut tape, l);
    tape.value(v).item()
}

/// Pairing loss of concrete representations through `classifier`.
pub fn backdoor_loss_value(
    params: &ParamSet,
    h_c: &Tensor,
    h_t: &Tensor,
    labels: &[usize],
    classifier: &Linear,
    plan: &PairingPlan,
) -> Result<f64> {
    let mut tape = Tape::new();
    let b = params.bind_constants(&mut tape);
    let hc = tape.constant(h_c.clone());
    let ht = tape.constant(h_t.clone());
    let v = backdoor_loss(&mut tape, &b, hc, ht, labels, classifier, plan)?;
    Ok(tape.value(v).item())
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;

    fn naive_ce(logits: &Tensor, labels: &[usize]) -> f64 {
        let mut total = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            let row = logits.row(r);
            let z: f64 = row.iter().map(|x| x.exp()).sum();
            total += -(row[y].exp() / z).ln();
        }
        total / labels.len() as f64
    }

    #[test]
    fn ce_uniform_two_classes_is_ln2() {
        let v = ce_loss_value(&Tensor::zeros(3, 2), &[0, 1, 1]);
        assert_abs_diff_eq!(v, std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn ce_vanishes_with_margin() {
        let mut prev = f64::INFINITY;
        for m in [1.0, 5.0, 20.0, 60.0] {
            let v = ce_loss_value(&Tensor::from_rows(&[vec![m, 0.0]]), &[0]);
            assert!(v >= 0.0 && v < prev);
            prev = v;
        }
        assert!(prev < 1e-20);
    }

    #[test]
    fn ce_matches_naive_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let logits = Tensor::from_vec(4, 3, (0..12).map(|_| rng.random_range(-3.0..3.0)).collect());
        let labels = [2, 0, 1, 1];
        assert_abs_diff_eq!(ce_loss_value(&logits, &labels), naive_ce(&logits, &labels), epsilon = 1e-12);
    }

    #[test]
    fn kl_cases() {
        assert_eq!(kl_uniform_loss_value(&Tensor::zeros(4, 2)), 0.0);
        assert_eq!(kl_uniform_loss_value(&Tensor::filled(2, 3, 1.7)), 0.0);
        let delta = kl_uniform_loss_value(&Tensor::from_rows(&[vec![80.0, 0.0]]));
        assert_abs_diff_eq!(delta, std::f64::consts::LN_2, epsilon = 1e-12);
        // p = (0.75, 0.25)
        let p = Tensor::from_rows(&[vec![3.0f64.ln(), 0.0]]);
        let h = -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln());
        assert_abs_diff_eq!(kl_uniform_loss_value(&p), std::f64::consts::LN_2 - h, epsilon = 1e-12);
        assert_abs_diff_eq!(kl_uniform_loss_value(&p), 0.130812, epsilon = 1e-6);
    }

    #[test]
    fn pairing_plans() {
        let p = plan_pairing_seeded(1, PairingMode::Permutation, false, 0);
        assert_eq!(p.pairs, vec![(0, 0)]);
        let p = plan_pairing_seeded(1, PairingMode::Permutation, true, 0);
        assert_eq!(p.pairs, vec![(0, 0)]);
        assert_eq!(plan_pairing_seeded(3, PairingMode::Full, false, 0).pairs.len(), 9);
        assert_eq!(plan_pairing_seeded(3, PairingMode::Full, true, 0).pairs.len(), 6);
        let a = plan_pairing_seeded(8, PairingMode::Permutation, false, 42);
        let b = plan_pairing_seeded(8, PairingMode::Permutation, false, 42);
        assert_eq!(a, b);
        let mut seen: Vec<usize> = a.pairs.iter().map(|p| p.1).collect();
        seen.sort();
        assert_eq!(seen, (0..8).collect::<Vec<_>>());
        let d = plan_pairing_seeded(8, PairingMode::Permutation, true, 42);
        assert!(d.pairs.iter().all(|&(k, kp)| k != kp));
    }

    fn mix_classifier(params: &mut ParamSet, d_h: usize, c: usize, seed: u64) -> Linear {
        let lin = Linear::new("classifier_mix", d_h, c, true);
        lin.init(params, &mut ChaCha8Rng::seed_from_u64(seed));
        for x in params.get_mut("classifier_mix.bias").unwrap().data_mut() {
            *x = 0.1;
        }
        lin
    }

    #[test]
    fn backdoor_with_zero_trivial_equals_ce() {
        let mut params = ParamSet::new();
        let lin = mix_classifier(&mut params, 4, 3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let hc = Tensor::from_vec(5, 4, (0..20).map(|_| rng.random_range(-1.0..1.0)).collect());
        let labels = [0, 2, 1, 1, 0];
        let ba = backdoor_loss_value(&params, &hc, &Tensor::zeros(5, 4), &labels, &lin, &PairingPlan::identity(5)).unwrap();

        let mut tape = Tape::new();
        let b = params.bind_constants(&mut tape);
        let h = tape.constant(hc.clone());
        let logits = lin.forward(&mut tape, &b, h).unwrap();
        let ce = ce_loss(&mut tape, logits, labels.as_slice().into());
        assert_abs_diff_eq!(ba, tape.value(ce).item(), epsilon = 1e-14);
    }

    #[test]
    fn backdoor_full_plan_matches_double_loop() {
        let mut params = ParamSet::new();
        let lin = mix_classifier(&mut params, 3, 2, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let hc = Tensor::from_vec(3, 3, (0..9).map(|_| rng.random_range(-1.0..1.0)).collect());
        let ht = Tensor::from_vec(3, 3, (0..9).map(|_| rng.random_range(-1.0..1.0)).collect());
        let labels = [1, 0, 1];
        let plan = plan_pairing_seeded(3, PairingMode::Full, false, 0);
        let got = backdoor_loss_value(&params, &hc, &ht, &labels, &lin, &plan).unwrap();

        let w = params.get("classifier_mix.weight").unwrap();
        let bias = params.get("classifier_mix.bias").unwrap();
        let mut total = 0.0;
        for k in 0..3 {
            for kp in 0..3 {
                let h: Vec<f64> = (0..3).map(|d| hc.get(k, d) + ht.get(kp, d)).collect();
                let logits: Vec<f64> = (0..2)
                    .map(|c| bias.get(0, c) + (0..3).map(|d| h[d] * w.get(d, c)).sum::<f64>())
                    .collect();
                total += naive_ce(&Tensor::from_vec(1, 2, logits), &[labels[k]]);
            }
        }
        assert_abs_diff_eq!(got, total / 9.0, epsilon = 1e-12);
    }

    #[test]
    fn total_loss_assembly() {
        let l = Lambdas::new(0.5, 0.5).unwrap();
        assert_eq!(LossBreakdown::assemble(1.0, 2.0, 3.0, l).unwrap().total, 3.5);
        let z = Lambdas::new(0.0, 0.0).unwrap();
        assert_eq!(LossBreakdown::assemble(0.7, 2.0, 3.0, z).unwrap().total, 0.7);
        assert!(Lambdas::new(-0.1, 0.5).is_err());

        let mut tape = Tape::new();
        let ce = tape.constant(Tensor::scalar(1.0));
        let kl = tape.constant(Tensor::scalar(2.0));
        let ba = tape.constant(Tensor::scalar(3.0));
        let t = total_loss(&mut tape, ce, kl, ba, l);
        assert_eq!(tape.value(t).item(), 3.5);
    }

    proptest! {
        #[test]
        fn random_totals_match_recomputation(ce in 0.0f64..10.0, kl in 0.0f64..10.0, ba in 0.0f64..10.0,
                                             l1 in 0.0f64..2.0, l2 in 0.0f64..2.0) {
            let b = LossBreakdown::assemble(ce, kl, ba, Lambdas::new(l1, l2).unwrap()).unwrap();
            prop_assert_eq!(b.total, ce + l1 * kl + l2 * ba);
        }

        #[test]
        fn kl_is_nonnegative(vals in proptest::collection::vec(-20.0f64..20.0, 6)) {
            let t = Tensor::from_vec(2, 3, vals);
            // rounding can leave a residue of a few ulps around zero
            prop_assert!(kl_uniform_loss_value(&t) >= -1e-15);
        }

        #[test]
        fn ce_is_nonnegative(vals in proptest::collection::vec(-20.0f64..20.0, 6), y in 0usize..3) {
            let t = Tensor::from_vec(2, 3, vals);
            prop_assert!(ce_loss_value(&t, &[y, 2 - y]) >= 0.0);
        }
    }
}
