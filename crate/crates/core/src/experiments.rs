//! Loss-term and edge-noise ablations, and CSV output.

use std::fmt;
use std::path::Path;

use crate::autodiff::ParamSet;
use crate::causal::CausalModel;
use crate::error::{Error, Result};
use crate::graph::Dataset;
use crate::objectives::Lambdas;
use crate::synth::permute_edge_features;
use crate::train::{evaluate, train, RunRecord, TrainConfig, Trained};

/// Minimum number of seeds per ablation variant.
pub const MIN_ABLATION_SEEDS: usize = 5;

#[derive(Clone, Copy, Debug)]
pub struct Splits<'a> {
    pub train: &'a Dataset,
    pub valid: &'a Dataset,
    pub test: &'a Dataset,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossVariant {
    Full,
    NoKl,
    NoBa,
    /// neither KL nor pairing term
    NoCd,
}

impl LossVariant {
    pub const ALL: [LossVariant; 4] = [LossVariant::Full, LossVariant::NoKl, LossVariant::NoBa, LossVariant::NoCd];

    pub fn lambdas(self, base: Lambdas) -> Lambdas {
        match self {
            LossVariant::Full => base,
            LossVariant::NoKl => Lambdas { kl: 0.0, ..base },
            LossVariant::NoBa => Lambdas { ba: 0.0, ..base },
            LossVariant::NoCd => Lambdas { kl: 0.0, ba: 0.0 },
        }
    }
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossVariant::Full => "full",
            LossVariant::NoKl => "-KL",
            LossVariant::NoBa => "-BA",
            LossVariant::NoCd => "-CD",
        })
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug)]
pub struct VariantRuns {
    pub variant: LossVariant,
    pub seeds: Vec<u64>,
    pub records: Vec<RunRecord>,
}

impl VariantRuns {
    pub fn test_accuracies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.test_acc.unwrap_or(f64::NAN)).collect()
    }

    pub fn mean_std(&self) -> (f64, f64) {
        mean_std(&self.test_accuracies())
    }
}

#[derive(Clone, Debug)]
pub struct LossAblation {
    pub variants: Vec<VariantRuns>,
}

impl LossAblation {
    pub fn variant(&self, v: LossVariant) -> &VariantRuns {
        self.variants.iter().find(|r| r.variant == v).expect("all variants are run")
    }
}

/// Trains, then fills in test accuracy and, with ground truth, the arc
/// recovery AUC on the test split.
pub fn train_and_test(cfg: &TrainConfig, data: Splits<'_>, truth: Option<&crate::synth::GroundTruth>) -> Result<Trained> {
    let mut out = train(cfg, data.train, data.valid)?;
    let ev = evaluate(&out.model, &out.params, data.test)?;
    out.record.test_acc = Some(ev.accuracy);
    out.record.per_class_acc = ev.per_class_accuracy;
    if let Some(t) = truth {
        out.record.auc = crate::train::edge_scores(&out.model, &out.params, data.test)?
            .and_then(|s| crate::stats::attention_recovery_auc(&s, t));
    }
    Ok(out)
}

/// Every loss variant trained under every seed.
pub fn run_loss_ablation(base: &TrainConfig, data: Splits<'_>, seeds: &[u64]) -> Result<LossAblation> {
    if seeds.len() < MIN_ABLATION_SEEDS {
        return Err(Error::Config(format!(
            "loss ablation needs at least {MIN_ABLATION_SEEDS} seeds, got {}",
            seeds.len()
        )));
    }
    let mut variants = Vec::with_capacity(4);
    for v in LossVariant::ALL {
        let mut records = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let cfg = TrainConfig {
                lambdas: v.lambdas(base.lambdas),
                seed,
                ..*base
            };
            records.push(train_and_test(&cfg, data, None)?.record);
        }
        variants.push(VariantRuns {
            variant: v,
            seeds: seeds.to_vec(),
            records,
        });
    }
    Ok(LossAblation { variants })
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseRow {
    pub proportion: f64,
    pub accuracy: f64,
}

/// Test accuracy of a trained model on edge-permuted copies of `test`.
pub fn noise_sweep(
    model: &CausalModel,
    params: &ParamSet,
    test: &Dataset,
    proportions: &[f64],
    noise_seed: u64,
) -> Result<Vec<NoiseRow>> {
    proportions
        .iter()
        .map(|&p| {
            let noisy = permute_edge_features(test, p, noise_seed)?;
            Ok(NoiseRow {
                proportion: p,
                accuracy: evaluate(model, params, &noisy)?.accuracy,
            })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct NoiseAblation {
    pub clean_accuracy: f64,
    pub rows: Vec<NoiseRow>,
    pub record: RunRecord,
}

/// Trains once and sweeps the permutation proportions on the test split.
pub fn run_noise_ablation(cfg: &TrainConfig, data: Splits<'_>, proportions: &[f64], noise_seed: u64) -> Result<NoiseAblation> {
    if let Some(p) = proportions.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Config(format!("permutation proportion {p} outside [0, 1]")));
    }
    let trained = train_and_test(cfg, data, None)?;
    let rows = noise_sweep(&trained.model, &trained.params, data.test, proportions, noise_seed)?;
    Ok(NoiseAblation {
        clean_accuracy: trained.record.test_acc.expect("set by train_and_test"),
        rows,
        record: trained.record,
    })
}

/// 64-bit FNV-1a, stable across builds and platforms.
pub fn config_hash(cfg: &TrainConfig) -> String {
    let text = format!("{cfg:?}");
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

fn real(x: f64) -> String {
    format!("{x:?}")
}

fn opt_real(x: Option<f64>) -> String {
    x.map(real).unwrap_or_default()
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// `epoch,ce,kl,ba,total,valid_acc`
pub fn write_run_csv(path: impl AsRef<Path>, record: &RunRecord) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["epoch", "ce", "kl", "ba", "total", "valid_acc"])?;
    for e in &record.epochs {
        w.write_record([
            e.epoch.to_string(),
            real(e.loss.ce),
            real(e.loss.kl),
            real(e.loss.ba),
            real(e.loss.total),
            real(e.valid_acc),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub config_hash: String,
    pub seed: u64,
    pub test_acc: f64,
    pub auc: Option<f64>,
}

/// `config_hash,seed,test_acc,auc`; `auc` is empty when undefined.
pub fn write_summary_csv(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["config_hash", "seed", "test_acc", "auc"])?;
    for r in rows {
        w.write_record([r.config_hash.clone(), r.seed.to_string(), real(r.test_acc), opt_real(r.auc)])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

/// `variant,seeds,mean_test_acc,std_test_acc,test_accs` with the per-seed
/// accuracies joined by `;`.
pub fn write_loss_ablation_csv(path: impl AsRef<Path>, ablation: &LossAblation) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["variant", "seeds", "mean_test_acc", "std_test_acc", "test_accs"])?;
    for v in &ablation.variants {
        let (m, s) = v.mean_std();
        let accs: Vec<String> = v.test_accuracies().into_iter().map(real).collect();
        w.write_record([v.variant.to_string(), v.seeds.len().to_string(), real(m), real(s), accs.join(";")])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

/// `proportion,test_acc`
pub fn write_noise_ablation_csv(path: impl AsRef<Path>, rows: &[NoiseRow]) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["proportion", "test_acc"])?;
    for r in rows {
        w.write_record([real(r.proportion), real(r.accuracy)])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}
