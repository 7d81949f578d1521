//! Minibatch training with Adam, model selection on validation accuracy,
//! and evaluation.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{value_and_grad, Bindings, ParamSet, Tape, Var};
use crate::causal::{CausalMode, CausalModel, ModelConfig};
use crate::encoders::EncoderKind;
use crate::error::{Error, Result};
use crate::graph::{Batch, Dataset};
use crate::objectives::{
    backdoor_loss, ce_loss, kl_uniform_loss, plan_pairing, total_loss, Lambdas, LossBreakdown, PairingMode,
    PairingPlan,
};

/// Graphs per forward pass during evaluation.
const EVAL_CHUNK: usize = 128;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Objective {
    /// cross-entropy plus the weighted KL and pairing terms
    #[default]
    Full,
    /// cross-entropy of the causal branch alone; the other terms are never built
    CeOnly,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub encoder: EncoderKind,
    /// `None` picks the default for the causal mode
    pub estimator: Option<EncoderKind>,
    pub causal: CausalMode,
    pub d_h: usize,
    pub depth: usize,
    pub lambdas: Lambdas,
    pub objective: Objective,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub pairing: PairingMode,
    pub exclude_self_pairs: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderKind::EgatV2,
            estimator: None,
            causal: CausalMode::Ecal,
            d_h: 32,
            depth: 2,
            lambdas: Lambdas::default(),
            objective: Objective::Full,
            epochs: 100,
            batch_size: 32,
            learning_rate: 0.005,
            seed: 0,
            pairing: PairingMode::Permutation,
            exclude_self_pairs: false,
        }
    }
}

impl TrainConfig {
    pub fn model_config(&self, d_v: usize, d_e: usize, num_classes: usize) -> ModelConfig {
        let mut m = ModelConfig::new(self.encoder, self.causal, d_v, d_e, num_classes);
        if let Some(e) = self.estimator {
            m.estimator = e;
        }
        m.d_h = self.d_h;
        m.depth = self.depth;
        m
    }

    pub fn validate(&self) -> Result<()> {
        Lambdas::new(self.lambdas.kl, self.lambdas.ba)?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be finite and non-negative", self.learning_rate)));
        }
        if self.pairing == PairingMode::Full && self.batch_size > 16 {
            return Err(Error::Config("full pairing is limited to batches of at most 16".into()));
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: ParamSet,
    v: ParamSet,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: ParamSet::new(),
            v: ParamSet::new(),
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (name, p) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            if !self.m.contains(name) {
                self.m.init_zeros(name.to_string(), p.rows(), p.cols());
                self.v.init_zeros(name.to_string(), p.rows(), p.cols());
            }
            let m = self.m.get_mut(name).unwrap().data_mut();
            let v = self.v.get_mut(name).unwrap().data_mut();
            for (((x, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *x -= self.learning_rate * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Tape handles of the loss terms of one batch. Plain models and the
/// cross-entropy-only objective leave `kl` and `ba` empty.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub ce: Var,
    pub kl: Option<Var>,
    pub ba: Option<Var>,
    pub total: Var,
}

/// Builds the training objective of `model` on one batch.
pub fn loss_on_tape(
    model: &CausalModel,
    tape: &mut Tape,
    b: &Bindings,
    batch: &Batch,
    objective: Objective,
    lambdas: Lambdas,
    plan: &PairingPlan,
) -> Result<LossVars> {
    let out = model.forward(tape, b, batch)?;
    let ce = ce_loss(tape, out.logits_c, batch.labels.clone());
    let (Some(h_t), Some(logits_t), Some(mix), Objective::Full) =
        (out.h_t, out.logits_t, model.classifier_mix.as_ref(), objective)
    else {
        return Ok(LossVars {
            ce,
            kl: None,
            ba: None,
            total: ce,
        });
    };
    let kl = kl_uniform_loss(tape, logits_t);
    let ba = backdoor_loss(tape, b, out.h_c, h_t, &batch.labels, mix, plan)?;
    let total = total_loss(tape, ce, kl, ba, lambdas);
    Ok(LossVars {
        ce,
        kl: Some(kl),
        ba: Some(ba),
        total,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// mean over the epoch's batches
    pub loss: LossBreakdown,
    pub valid_acc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub epochs: Vec<EpochRecord>,
    /// 1-based index of the selected epoch
    pub best_epoch: usize,
    pub best_valid_acc: f64,
    pub test_acc: Option<f64>,
    pub per_class_acc: Vec<Option<f64>>,
    pub auc: Option<f64>,
    /// excluded from determinism comparisons
    pub wall_clock_secs: f64,
}

impl RunRecord {
    /// Equality on everything except timing.
    pub fn same_results(&self, other: &RunRecord) -> bool {
        let strip = |r: &RunRecord| RunRecord {
            wall_clock_secs: 0.0,
            ..r.clone()
        };
        strip(self) == strip(other)
    }

    pub fn loss_trajectory(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss.total).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub model: CausalModel,
    pub params: ParamSet,
    pub record: RunRecord,
}

fn check_widths(reference: &Dataset, other: &Dataset) -> Result<()> {
    if (reference.d_v, reference.d_e, reference.num_classes) != (other.d_v, other.d_e, other.num_classes) {
        return Err(Error::FeatureWidth {
            expected_dv: reference.d_v,
            expected_de: reference.d_e,
            dv: other.d_v,
            de: other.d_e,
        });
    }
    Ok(())
}

/// Trains from scratch and keeps the parameters of the epoch with the
/// highest validation accuracy, the earliest one on ties.
pub fn train(cfg: &TrainConfig, train_ds: &Dataset, valid_ds: &Dataset) -> Result<Trained> {
    let started = Instant::now();
    cfg.validate()?;
    check_widths(train_ds, valid_ds)?;
    if train_ds.is_empty() || valid_ds.is_empty() {
        return Err(Error::InvalidDataset("training and validation sets must be non-empty".into()));
    }
    let model = CausalModel::new(cfg.model_config(train_ds.d_v, train_ds.d_e, train_ds.num_classes))?;
    let mut params = model.init(cfg.seed);
    let mut adam = Adam::new(cfg.learning_rate);

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut pairing_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    pairing_rng.set_stream(2);

    let mut order: Vec<usize> = (0..train_ds.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, ParamSet)> = None;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sums = [0.0f64; 4];
        let mut batches = 0usize;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = Batch::new(chunk.iter().map(|&k| &train_ds.graphs[k]))?;
            let plan = plan_pairing(chunk.len(), cfg.pairing, cfg.exclude_self_pairs, &mut pairing_rng);
            let mut parts = [0.0f64; 3];
            let (total, grads) = value_and_grad(&params, |tape, b| {
                let l = loss_on_tape(&model, tape, b, &batch, cfg.objective, cfg.lambdas, &plan)?;
                parts[0] = tape.value(l.ce).item();
                parts[1] = l.kl.map_or(0.0, |v| tape.value(v).item());
                parts[2] = l.ba.map_or(0.0, |v| tape.value(v).item());
                Ok(l.total)
            })
            .map_err(|e| match e {
                Error::NonFinite { .. } => Error::NanLoss { epoch, batch: bi },
                other => other,
            })?;
            adam.step(&mut params, &grads);
            for (s, v) in sums.iter_mut().zip([parts[0], parts[1], parts[2], total]) {
                *s += v;
            }
            batches += 1;
        }
        let n = batches as f64;
        let loss = LossBreakdown {
            ce: sums[0] / n,
            kl: sums[1] / n,
            ba: sums[2] / n,
            lambda1: cfg.lambdas.kl,
            lambda2: cfg.lambdas.ba,
            total: sums[3] / n,
        };
        let valid_acc = evaluate(&model, &params, valid_ds)?.accuracy;
        if best.as_ref().is_none_or(|b| valid_acc > b.1) {
            best = Some((epoch, valid_acc, params.clone()));
        }
        epochs.push(EpochRecord { epoch, loss, valid_acc });
    }
    let (best_epoch, best_valid_acc, params) = best.unwrap_or((0, f64::NAN, params));
    Ok(Trained {
        model,
        params,
        record: RunRecord {
            epochs,
            best_epoch,
            best_valid_acc,
            test_acc: None,
            per_class_acc: Vec::new(),
            auc: None,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        },
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `None` for classes absent from the dataset
    pub per_class_accuracy: Vec<Option<f64>>,
    pub predictions: Vec<usize>,
}

/// Index of the largest entry, the lowest index on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

pub fn evaluate(model: &CausalModel, params: &ParamSet, ds: &Dataset) -> Result<Evaluation> {
    let mut predictions = Vec::with_capacity(ds.len());
    for chunk in ds.graphs.chunks(EVAL_CHUNK) {
        let batch = Batch::new(chunk)?;
        let logits = model.graph_logits(params, &batch)?;
        predictions.extend((0..logits.rows()).map(|r| argmax(logits.row(r))));
    }
    Ok(score_predictions(&predictions, &ds.labels(), ds.num_classes))
}

pub fn score_predictions(predictions: &[usize], labels: &[usize], num_classes: usize) -> Evaluation {
    let mut hit = vec![0usize; num_classes];
    let mut count = vec![0usize; num_classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        count[y] += 1;
        hit[y] += usize::from(p == y);
    }
    let total: usize = count.iter().sum();
    Evaluation {
        accuracy: if total == 0 {
            f64::NAN
        } else {
            hit.iter().sum::<usize>() as f64 / total as f64
        },
        per_class_accuracy: hit
            .iter()
            .zip(&count)
            .map(|(&h, &c)| (c > 0).then(|| h as f64 / c as f64))
            .collect(),
        predictions: predictions.to_vec(),
    }
}

/// Per-graph arc scores of the estimator, or `None` for a plain model.
pub fn edge_scores(model: &CausalModel, params: &ParamSet, ds: &Dataset) -> Result<Option<Vec<Vec<f64>>>> {
    if !model.is_causal() {
        return Ok(None);
    }
    let mut out = Vec::with_capacity(ds.len());
    for chunk in ds.graphs.chunks(EVAL_CHUNK) {
        let batch = Batch::new(chunk)?;
        let scores = model
            .estimate_causal_scores(params, &batch)?
            .expect("causal model yields scores");
        for w in batch.edge_offsets.windows(2) {
            out.push(scores.alpha_edge[w[0]..w[1]].to_vec());
        }
    }
    Ok(Some(out))
}
