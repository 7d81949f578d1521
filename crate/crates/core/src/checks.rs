//! Finite-difference gradient checks of every encoder and loss term.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{grad_check_report, Bindings, GradCheckReport, ParamSet, Tape, Tensor, Var};
use crate::causal::{CausalMode, CausalModel, ModelConfig};
use crate::encoders::{Encoder, EncoderKind};
use crate::error::Result;
use crate::graph::{random_graph, Batch, Graph};
use crate::objectives::{plan_pairing, Lambdas, PairingMode};
use crate::train::{loss_on_tape, LossVars, Objective};

pub const DEFAULT_EPSILON: f64 = 1e-5;
/// Draws with a LeakyReLU input closer than this to zero are redrawn.
pub const DEFAULT_KINK_MARGIN: f64 = 1e-4;
const MAX_REDRAWS: usize = 50;

const D_V: usize = 3;
const D_E: usize = 2;
const D_H: usize = 3;

#[derive(Clone, Debug)]
pub struct ComponentCheck {
    pub name: String,
    /// largest relative error over all graphs
    pub max_relative_error: f64,
    pub graphs: usize,
    /// draws discarded for sitting too close to a kink
    pub redraws: usize,
}

#[derive(Clone, Copy, Debug)]
enum Term {
    Ce,
    Kl,
    Ba,
    Total,
}

impl Term {
    const ALL: [Term; 4] = [Term::Ce, Term::Kl, Term::Ba, Term::Total];

    fn name(self) -> &'static str {
        match self {
            Term::Ce => "loss:ce",
            Term::Kl => "loss:kl",
            Term::Ba => "loss:ba",
            Term::Total => "loss:total",
        }
    }

    fn pick(self, l: LossVars) -> Var {
        match self {
            Term::Ce => l.ce,
            Term::Kl => l.kl.expect("full objective"),
            Term::Ba => l.ba.expect("full objective"),
            Term::Total => l.total,
        }
    }
}

/// Redraws parameters until no LeakyReLU input is within `margin` of its
/// kink, then reports.
fn check_away_from_kinks<F>(
    computation: F,
    init: impl Fn(u64) -> ParamSet,
    seed: u64,
    eps: f64,
    margin: f64,
) -> Result<(GradCheckReport, usize)>
where
    F: Fn(&mut Tape, &Bindings) -> Result<Var>,
{
    let mut redraws = 0;
    loop {
        let draw = seed.wrapping_mul(1000).wrapping_add(redraws as u64);
        let params = jitter_biases(init(draw), draw);
        let report = grad_check_report(&computation, &params, eps)?;
        if report.min_kink_distance >= margin || redraws == MAX_REDRAWS {
            return Ok((report, redraws));
        }
        redraws += 1;
    }
}

/// Zero biases put isolated nodes exactly on a kink; move them off.
fn jitter_biases(mut params: ParamSet, seed: u64) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(7);
    for (name, t) in params.iter_mut() {
        if name.ends_with(".bias") {
            t.data_mut().iter_mut().for_each(|x| *x = rng.random_range(-0.5..0.5));
        }
    }
    params
}

/// Random projection of the encoder outputs to a scalar.
fn encoder_probe<'a>(encoder: &'a Encoder, batch: &'a Batch, seed: u64) -> impl Fn(&mut Tape, &Bindings) -> Result<Var> + 'a {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |r, c| Tensor::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect());
    let node_w = draw(batch.num_nodes(), D_H);
    let edge_w = draw(batch.num_arcs(), D_H);
    move |tape, b| {
        let x = tape.constant(batch.node_features.clone());
        let e = tape.constant(batch.edge_features.clone());
        let out = encoder.forward(tape, b, batch, x, e)?;
        let w = tape.constant(node_w.clone());
        let s = tape.mul(out.nodes, w);
        let mut total = tape.sum(s);
        if let Some(edges) = out.edges {
            let w = tape.constant(edge_w.clone());
            let s = tape.mul(edges, w);
            let s = tape.sum(s);
            total = tape.add(total, s);
        }
        Ok(total)
    }
}

pub fn small_graphs(seed: u64, count: usize) -> Vec<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.random_range(2..=5);
            random_graph(&mut rng, n, D_V, D_E, 2)
        })
        .collect()
}

/// Checks each encoder kind on every graph and each loss term of an
/// ECAL+EGATv2 model on consecutive pairs of graphs.
pub fn gradient_suite(seed: u64, num_graphs: usize, eps: f64, margin: f64) -> Result<Vec<ComponentCheck>> {
    let graphs = small_graphs(seed, num_graphs);
    let mut out = Vec::new();
    for kind in EncoderKind::ALL {
        let encoder = Encoder::new(kind, "enc", D_V, D_E, D_H, 2);
        let mut check = ComponentCheck {
            name: format!("encoder:{kind}"),
            max_relative_error: 0.0,
            graphs: graphs.len(),
            redraws: 0,
        };
        for (k, g) in graphs.iter().enumerate() {
            let batch = Batch::new([g])?;
            let init = |s: u64| {
                let mut p = ParamSet::new();
                encoder.init(&mut p, &mut ChaCha8Rng::seed_from_u64(s));
                p
            };
            let (r, redraws) =
                check_away_from_kinks(encoder_probe(&encoder, &batch, seed ^ k as u64), init, seed + k as u64, eps, margin)?;
            check.max_relative_error = check.max_relative_error.max(r.max_relative_error);
            check.redraws += redraws;
        }
        out.push(check);
    }

    let mut cfg = ModelConfig::new(EncoderKind::EgatV2, CausalMode::Ecal, D_V, D_E, 2);
    cfg.d_h = D_H;
    cfg.depth = 1;
    let model = CausalModel::new(cfg)?;
    let lambdas = Lambdas::default();
    for term in Term::ALL {
        let mut check = ComponentCheck {
            name: term.name().to_string(),
            max_relative_error: 0.0,
            graphs: graphs.len(),
            redraws: 0,
        };
        for k in 0..graphs.len() {
            let pair = [&graphs[k], &graphs[(k + 1) % graphs.len()]];
            let mut batch = Batch::new(pair)?;
            // labels of random graphs may coincide; force both classes
            batch.labels = Arc::from(vec![0, 1]);
            let plan = plan_pairing(2, PairingMode::Full, false, &mut ChaCha8Rng::seed_from_u64(0));
            let computation = |tape: &mut Tape, b: &Bindings| {
                let l = loss_on_tape(&model, tape, b, &batch, Objective::Full, lambdas, &plan)?;
                Ok(term.pick(l))
            };
            let (r, redraws) = check_away_from_kinks(computation, |s| model.init(s), seed + k as u64, eps, margin)?;
            check.max_relative_error = check.max_relative_error.max(r.max_relative_error);
            check.redraws += redraws;
        }
        out.push(check);
    }
    Ok(out)
}
