//! Causality scores, soft subgraph splitting, and the dual-branch model.
//!
//! An estimator encoder embeds the graph; two small heads turn node and
//! arc embeddings into scores `alpha` in (0, 1). Node and arc feature rows
//! are scaled by `alpha` (causal view) and `1 - alpha` (trivial view) and
//! each view is encoded, mean-pooled and classified separately. The
//! adjacency is never touched.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Bindings, ParamSet, Tape, Tensor, Var};
use crate::encoders::{Encoder, EncoderKind};
use crate::error::{Error, Result};
use crate::graph::Batch;
use crate::nn::{Linear, Mlp, LEAKY_SLOPE};

/// Keeps scores strictly inside (0, 1) even when the softmax saturates.
const SCORE_SQUEEZE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CausalMode {
    /// a single encoder and classifier
    None,
    /// causal attention with an edge-blind estimator; arc scores fixed at 0.5
    Cal,
    /// causal attention with an edge-featured estimator
    Ecal,
}

impl fmt::Display for CausalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CausalMode::None => "none",
            CausalMode::Cal => "cal",
            CausalMode::Ecal => "ecal",
        })
    }
}

impl FromStr for CausalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(CausalMode::None),
            "cal" => Ok(CausalMode::Cal),
            "ecal" => Ok(CausalMode::Ecal),
            other => Err(Error::Config(format!("unknown causal mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    /// encoder of the causal and trivial branches
    pub encoder: EncoderKind,
    pub estimator: EncoderKind,
    pub causal: CausalMode,
    pub d_v: usize,
    pub d_e: usize,
    pub d_h: usize,
    pub num_classes: usize,
    pub depth: usize,
}

impl ModelConfig {
    /// Defaults: `d_h = 32`, two layers, and an EGATv2 estimator under
    /// [`CausalMode::Ecal`] (the branch encoder otherwise).
    pub fn new(encoder: EncoderKind, causal: CausalMode, d_v: usize, d_e: usize, num_classes: usize) -> Self {
        let estimator = match causal {
            CausalMode::Ecal => EncoderKind::EgatV2,
            _ => encoder,
        };
        Self {
            encoder,
            estimator,
            causal,
            d_v,
            d_e,
            d_h: 32,
            num_classes,
            depth: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.num_classes)));
        }
        if self.d_h == 0 || self.depth == 0 {
            return Err(Error::Config("hidden width and depth must be positive".into()));
        }
        if self.causal == CausalMode::Ecal && !self.estimator.uses_edge_features() {
            return Err(Error::Config(format!(
                "causal mode ecal needs an edge-featured estimator (egatv1 or egatv2), got {}",
                self.estimator
            )));
        }
        Ok(())
    }
}

/// Per-node and per-arc causality scores.
#[derive(Clone, Debug, PartialEq)]
pub struct CausalScores {
    pub alpha_node: Vec<f64>,
    pub alpha_edge: Vec<f64>,
}

/// Causal and trivial views of a batch. Both share the original arc lists.
#[derive(Clone, Debug)]
pub struct SubgraphPair {
    pub causal: Batch,
    pub trivial: Batch,
}

/// Row scaling by `alpha` and `1 - alpha`, with the same arithmetic as the
/// tape's `scale_rows`/`one_minus`.
pub fn split_subgraphs(batch: &Batch, scores: &CausalScores) -> Result<SubgraphPair> {
    if scores.alpha_node.len() != batch.num_nodes() || scores.alpha_edge.len() != batch.num_arcs() {
        return Err(Error::Shape(format!(
            "scores cover {} nodes and {} arcs, batch has {} and {}",
            scores.alpha_node.len(),
            scores.alpha_edge.len(),
            batch.num_nodes(),
            batch.num_arcs()
        )));
    }
    let mask = |t: &Tensor, alpha: &[f64], complement: bool| {
        let mut out = t.clone();
        for (r, &a) in alpha.iter().enumerate() {
            let s = if complement { 1.0 - a } else { a };
            for x in out.row_mut(r) {
                *x *= s;
            }
        }
        out
    };
    let mut causal = batch.clone();
    causal.node_features = mask(&batch.node_features, &scores.alpha_node, false);
    causal.edge_features = mask(&batch.edge_features, &scores.alpha_edge, false);
    let mut trivial = batch.clone();
    trivial.node_features = mask(&batch.node_features, &scores.alpha_node, true);
    trivial.edge_features = mask(&batch.edge_features, &scores.alpha_edge, true);
    Ok(SubgraphPair { causal, trivial })
}

/// Mean-pooled encoder embeddings of every graph in `batch`: `B x d_h`.
pub fn subgraph_representation(encoder: &Encoder, params: &ParamSet, batch: &Batch) -> Result<Tensor> {
    let mut tape = Tape::new();
    let b = params.bind_constants(&mut tape);
    let h = readout(&mut tape, &b, encoder, batch, None)?;
    Ok(tape.value(h).clone())
}

/// Graph logits of a classifier applied to representations `h`.
pub fn predict(classifier: &Linear, params: &ParamSet, h: &Tensor) -> Result<Tensor> {
    if h.cols() != classifier.d_in {
        return Err(Error::Shape(format!(
            "classifier expects width {}, got {}",
            classifier.d_in,
            h.cols()
        )));
    }
    let mut tape = Tape::new();
    let b = params.bind_constants(&mut tape);
    let x = tape.constant(h.clone());
    let y = classifier.forward(&mut tape, &b, x)?;
    Ok(tape.value(y).clone())
}

/// `(x, e)` default to the batch's own features.
fn readout(
    tape: &mut Tape,
    b: &Bindings,
    encoder: &Encoder,
    batch: &Batch,
    features: Option<(Var, Var)>,
) -> Result<Var> {
    let (x, e) = match features {
        Some(f) => f,
        None => (
            tape.constant(batch.node_features.clone()),
            tape.constant(batch.edge_features.clone()),
        ),
    };
    let out = encoder.forward(tape, b, batch, x, e)?;
    Ok(tape.segment_mean(out.nodes, batch.node_graph.clone(), batch.num_graphs()))
}

/// `alpha = 0.5 + (1 - 2 eta)(softmax(logits)_0 - 0.5)`
fn score_from_logits(tape: &mut Tape, logits: Var) -> Var {
    let p = tape.softmax_rows(logits);
    let p0 = tape.select_col(p, 0);
    let c = tape.add_scalar(p0, -0.5);
    let c = tape.scale(c, 1.0 - 2.0 * SCORE_SQUEEZE);
    tape.add_scalar(c, 0.5)
}

/// Tape handles of one model forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub alpha_node: Option<Var>,
    pub alpha_edge: Option<Var>,
    /// `B x d_h`
    pub h_c: Var,
    /// `B x C`
    pub logits_c: Var,
    pub h_t: Option<Var>,
    pub logits_t: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct Estimator {
    pub encoder: Encoder,
    pub mlp_node: Mlp,
    /// absent for edge-blind estimators
    pub mlp_edge: Option<Mlp>,
}

/// Model structure. Parameters live in a separate [`ParamSet`].
#[derive(Clone, Debug)]
pub struct CausalModel {
    pub config: ModelConfig,
    pub estimator: Option<Estimator>,
    pub causal_encoder: Encoder,
    pub trivial_encoder: Option<Encoder>,
    pub classifier_c: Linear,
    pub classifier_t: Option<Linear>,
    pub classifier_mix: Option<Linear>,
}

impl CausalModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let ModelConfig {
            d_v,
            d_e,
            d_h,
            depth,
            num_classes: c,
            ..
        } = config;
        let causal = config.causal != CausalMode::None;
        let estimator = causal.then(|| {
            let encoder = Encoder::new(config.estimator, "estimator.encoder", d_v, d_e, d_h, depth);
            Estimator {
                encoder,
                mlp_node: Mlp::new("estimator.mlp_node", d_h, d_h, 2, LEAKY_SLOPE),
                mlp_edge: (config.causal == CausalMode::Ecal)
                    .then(|| Mlp::new("estimator.mlp_edge", d_h, d_h, 2, LEAKY_SLOPE)),
            }
        });
        Ok(Self {
            config,
            estimator,
            causal_encoder: Encoder::new(config.encoder, "causal_encoder", d_v, d_e, d_h, depth),
            trivial_encoder: causal.then(|| Encoder::new(config.encoder, "trivial_encoder", d_v, d_e, d_h, depth)),
            classifier_c: Linear::new("classifier_c", d_h, c, true),
            classifier_t: causal.then(|| Linear::new("classifier_t", d_h, c, true)),
            classifier_mix: causal.then(|| Linear::new("classifier_mix", d_h, c, true)),
        })
    }

    pub fn is_causal(&self) -> bool {
        self.config.causal != CausalMode::None
    }

    /// Fresh parameters from `seed`, in a fixed order.
    pub fn init(&self, seed: u64) -> ParamSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        if let Some(est) = &self.estimator {
            est.encoder.init(&mut params, &mut rng);
            est.mlp_node.init(&mut params, &mut rng);
            if let Some(m) = &est.mlp_edge {
                m.init(&mut params, &mut rng);
            }
        }
        self.causal_encoder.init(&mut params, &mut rng);
        if let Some(t) = &self.trivial_encoder {
            t.init(&mut params, &mut rng);
        }
        self.classifier_c.init(&mut params, &mut rng);
        for c in [&self.classifier_t, &self.classifier_mix].into_iter().flatten() {
            c.init(&mut params, &mut rng);
        }
        params
    }

    /// Checks that `params` holds a tensor of the right shape for every key.
    pub fn check_params(&self, params: &ParamSet) -> Result<()> {
        let reference = self.init(0);
        for (name, t) in reference.iter() {
            let got = params.get(name).ok_or_else(|| Error::MissingParam(name.to_string()))?;
            if got.shape() != t.shape() {
                return Err(Error::Shape(format!(
                    "parameter {name}: expected {:?}, found {:?}",
                    t.shape(),
                    got.shape()
                )));
            }
        }
        Ok(())
    }

    fn scores_on_tape(&self, tape: &mut Tape, b: &Bindings, batch: &Batch) -> Result<Option<(Var, Var)>> {
        let Some(est) = &self.estimator else {
            return Ok(None);
        };
        let x = tape.constant(batch.node_features.clone());
        let e = tape.constant(batch.edge_features.clone());
        let out = est.encoder.forward(tape, b, batch, x, e)?;
        let node_logits = est.mlp_node.forward(tape, b, out.nodes)?;
        let alpha_node = score_from_logits(tape, node_logits);
        let alpha_edge = match (&est.mlp_edge, out.edges) {
            (Some(mlp), Some(edges)) => {
                let l = mlp.forward(tape, b, edges)?;
                score_from_logits(tape, l)
            }
            _ => tape.constant(Tensor::filled(batch.num_arcs(), 1, 0.5)),
        };
        Ok(Some((alpha_node, alpha_edge)))
    }

    pub fn forward(&self, tape: &mut Tape, b: &Bindings, batch: &Batch) -> Result<ForwardOutput> {
        let Some((alpha_node, alpha_edge)) = self.scores_on_tape(tape, b, batch)? else {
            let h_c = readout(tape, b, &self.causal_encoder, batch, None)?;
            let logits_c = self.classifier_c.forward(tape, b, h_c)?;
            return Ok(ForwardOutput {
                alpha_node: None,
                alpha_edge: None,
                h_c,
                logits_c,
                h_t: None,
                logits_t: None,
            });
        };
        let x = tape.constant(batch.node_features.clone());
        let e = tape.constant(batch.edge_features.clone());
        let xc = tape.scale_rows(x, alpha_node);
        let ec = tape.scale_rows(e, alpha_edge);
        let not_node = tape.one_minus(alpha_node);
        let not_edge = tape.one_minus(alpha_edge);
        let xt = tape.scale_rows(x, not_node);
        let et = tape.scale_rows(e, not_edge);

        let h_c = readout(tape, b, &self.causal_encoder, batch, Some((xc, ec)))?;
        let logits_c = self.classifier_c.forward(tape, b, h_c)?;
        let trivial = self.trivial_encoder.as_ref().expect("causal model has a trivial encoder");
        let h_t = readout(tape, b, trivial, batch, Some((xt, et)))?;
        let logits_t = self
            .classifier_t
            .as_ref()
            .expect("causal model has a trivial classifier")
            .forward(tape, b, h_t)?;
        Ok(ForwardOutput {
            alpha_node: Some(alpha_node),
            alpha_edge: Some(alpha_edge),
            h_c,
            logits_c,
            h_t: Some(h_t),
            logits_t: Some(logits_t),
        })
    }

    /// Scores of the estimator, or `None` for a plain model.
    pub fn estimate_causal_scores(&self, params: &ParamSet, batch: &Batch) -> Result<Option<CausalScores>> {
        let mut tape = Tape::new();
        let b = params.bind_constants(&mut tape);
        Ok(self.scores_on_tape(&mut tape, &b, batch)?.map(|(an, ae)| CausalScores {
            alpha_node: tape.value(an).data().to_vec(),
            alpha_edge: tape.value(ae).data().to_vec(),
        }))
    }

    /// Causal-branch logits `B x C`.
    pub fn graph_logits(&self, params: &ParamSet, batch: &Batch) -> Result<Tensor> {
        let mut tape = Tape::new();
        let b = params.bind_constants(&mut tape);
        let out = self.forward(&mut tape, &b, batch)?;
        Ok(tape.value(out.logits_c).clone())
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    use super::*;
    use crate::graph::{permute_nodes, random_graph, Graph};

    fn score_values(logits: Tensor) -> Vec<f64> {
        let mut tape = Tape::new();
        let l = tape.constant(logits);
        let a = score_from_logits(&mut tape, l);
        tape.value(a).data().to_vec()
    }

    #[test]
    fn zero_logits_give_half() {
        assert_eq!(score_values(Tensor::zeros(3, 2)), vec![0.5; 3]);
    }

    #[test]
    fn scores_monotone_and_strictly_inside() {
        let ts: Vec<f64> = (0..=50).map(|k| k as f64).collect();
        let rows: Vec<Vec<f64>> = ts.iter().map(|&t| vec![t, -t]).collect();
        let a = score_values(Tensor::from_rows(&rows));
        for w in a.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert!(a[50] < 1.0 && a[50] > 1.0 - 1e-9);
        let low = score_values(Tensor::from_rows(&[vec![-50.0, 50.0]]));
        assert!(low[0] > 0.0 && low[0] < 1e-9);
    }

    fn small_batch(seed: u64, count: usize) -> (Vec<Graph>, Batch) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graphs: Vec<Graph> = (0..count)
            .map(|_| {
                let n = rng.random_range(1..7);
                random_graph(&mut rng, n, 3, 2, 2)
            })
            .collect();
        let batch = Batch::new(graphs.iter()).unwrap();
        (graphs, batch)
    }

    fn model(causal: CausalMode, encoder: EncoderKind) -> CausalModel {
        let mut cfg = ModelConfig::new(encoder, causal, 3, 2, 2);
        cfg.d_h = 5;
        CausalModel::new(cfg).unwrap()
    }

    #[test]
    fn ecal_rejects_edge_blind_estimator() {
        let mut cfg = ModelConfig::new(EncoderKind::Gcn, CausalMode::Ecal, 3, 2, 2);
        cfg.estimator = EncoderKind::Gat;
        assert!(matches!(CausalModel::new(cfg), Err(Error::Config(_))));
    }

    #[test]
    fn parameter_groups_are_disjoint() {
        let m = model(CausalMode::Ecal, EncoderKind::EgatV2);
        let p = m.init(1);
        let prefixes = ["estimator.", "causal_encoder.", "trivial_encoder.", "classifier_c.", "classifier_t.", "classifier_mix."];
        for name in p.names() {
            assert_eq!(prefixes.iter().filter(|q| name.starts_with(*q)).count(), 1, "{name}");
        }
        for q in prefixes {
            assert!(p.names().any(|n| n.starts_with(q)), "{q}");
        }
        let plain = model(CausalMode::None, EncoderKind::Gcn).init(1);
        assert!(plain.names().all(|n| n.starts_with("causal_encoder.") || n.starts_with("classifier_c.")));
    }

    #[test]
    fn split_masks() {
        let (_, batch) = small_batch(3, 4);
        let ones = CausalScores {
            alpha_node: vec![1.0; batch.num_nodes()],
            alpha_edge: vec![1.0; batch.num_arcs()],
        };
        let pair = split_subgraphs(&batch, &ones).unwrap();
        assert_eq!(pair.causal.node_features, batch.node_features);
        assert!(pair.trivial.edge_features.data().iter().all(|&x| x == 0.0));

        let halves = CausalScores {
            alpha_node: vec![0.5; batch.num_nodes()],
            alpha_edge: vec![0.5; batch.num_arcs()],
        };
        let pair = split_subgraphs(&batch, &halves).unwrap();
        assert_eq!(pair.causal.node_features, pair.trivial.node_features);
        assert_eq!(pair.causal.edge_features, pair.trivial.edge_features);

        let bad = CausalScores {
            alpha_node: vec![0.5],
            alpha_edge: vec![],
        };
        assert!(split_subgraphs(&batch, &bad).is_err());
    }

    #[test]
    fn random_scores_reconstruct_original() {
        let (_, batch) = small_batch(4, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let scores = CausalScores {
            alpha_node: (0..batch.num_nodes()).map(|_| rng.random()).collect(),
            alpha_edge: (0..batch.num_arcs()).map(|_| rng.random()).collect(),
        };
        let pair = split_subgraphs(&batch, &scores).unwrap();
        assert!(std::sync::Arc::ptr_eq(&pair.causal.src, &batch.src));
        assert!(std::sync::Arc::ptr_eq(&pair.trivial.dst, &batch.dst));
        for (orig, (c, t)) in [
            (&batch.node_features, (&pair.causal.node_features, &pair.trivial.node_features)),
            (&batch.edge_features, (&pair.causal.edge_features, &pair.trivial.edge_features)),
        ] {
            for ((o, c), t) in orig.data().iter().zip(c.data()).zip(t.data()) {
                assert!((c + t - o).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn tape_scores_match_value_api() {
        let (_, batch) = small_batch(5, 3);
        let m = model(CausalMode::Ecal, EncoderKind::EgatV2);
        let p = m.init(2);
        let s = m.estimate_causal_scores(&p, &batch).unwrap().unwrap();
        assert_eq!(s.alpha_node.len(), batch.num_nodes());
        assert_eq!(s.alpha_edge.len(), batch.num_arcs());
        assert!(s.alpha_node.iter().chain(&s.alpha_edge).all(|&a| a > 0.0 && a < 1.0));

        let cal = model(CausalMode::Cal, EncoderKind::Gcn);
        let s = cal.estimate_causal_scores(&cal.init(2), &batch).unwrap().unwrap();
        assert!(s.alpha_edge.iter().all(|&a| a == 0.5));
        assert!(model(CausalMode::None, EncoderKind::Gcn)
            .estimate_causal_scores(&p, &batch)
            .unwrap()
            .is_none());
    }

    #[test]
    fn single_node_readout_is_its_embedding() {
        let g = random_graph(&mut ChaCha8Rng::seed_from_u64(1), 1, 3, 2, 2);
        let batch = Batch::new([&g]).unwrap();
        let m = model(CausalMode::None, EncoderKind::EgatV2);
        let p = m.init(3);
        let h = subgraph_representation(&m.causal_encoder, &p, &batch).unwrap();
        let emb = m.causal_encoder.evaluate(&p, &batch).unwrap().node_embeddings;
        assert_eq!(h, emb);
    }

    /// Two disjoint copies of `g` as one graph.
    fn doubled(g: &Graph) -> Graph {
        let n = g.num_nodes;
        let mut edges = g.edges.clone();
        edges.extend(g.edges.iter().map(|&(s, d)| (s + n, d + n)));
        let stack = |t: &Tensor| {
            let mut v = t.data().to_vec();
            v.extend_from_slice(t.data());
            Tensor::from_vec(t.rows() * 2, t.cols(), v)
        };
        Graph {
            num_nodes: 2 * n,
            edges,
            node_features: stack(&g.node_features),
            edge_features: stack(&g.edge_features),
            label: g.label,
        }
    }

    #[test]
    fn readout_invariant_under_replication_and_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for kind in EncoderKind::ALL {
            let m = model(CausalMode::None, kind);
            let p = m.init(4);
            let g = random_graph(&mut rng, 5, 3, 2, 2);
            let h = |g: &Graph| subgraph_representation(&m.causal_encoder, &p, &Batch::new([g]).unwrap()).unwrap();
            let base = h(&g);
            assert!(base.max_abs_diff(&h(&doubled(&g))) < 1e-12, "{kind}");
            let perm = [3, 0, 4, 1, 2];
            assert!(base.max_abs_diff(&h(&permute_nodes(&g, &perm).unwrap())) < 1e-10, "{kind}");
        }
    }

    #[test]
    fn graph_logits_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for (causal, kind) in [
            (CausalMode::Ecal, EncoderKind::EgatV2),
            (CausalMode::Ecal, EncoderKind::EgatV1),
            (CausalMode::Cal, EncoderKind::Gcn),
            (CausalMode::None, EncoderKind::Gat),
        ] {
            let m = model(causal, kind);
            let p = m.init(6);
            let g = random_graph(&mut rng, 6, 3, 2, 2);
            let perm = [5, 2, 0, 4, 1, 3];
            let a = m.graph_logits(&p, &Batch::new([&g]).unwrap()).unwrap();
            let b = m.graph_logits(&p, &Batch::new([&permute_nodes(&g, &perm).unwrap()]).unwrap()).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-9);
        }
    }

    #[test]
    fn predict_cases() {
        let mut p = ParamSet::new();
        let lin = Linear::new("classifier_c", 3, 3, true);
        lin.init(&mut p, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(predict(&lin, &p, &Tensor::zeros(2, 3)).unwrap(), Tensor::zeros(2, 3));
        p.insert(
            "classifier_c.weight".into(),
            Tensor::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]),
        );
        let h = Tensor::from_rows(&[vec![0.3, -2.0, 7.5]]);
        assert_eq!(predict(&lin, &p, &h).unwrap(), h);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = Tensor::from_vec(3, 3, (0..9).map(|_| rng.random_range(-1.0..1.0)).collect());
        let bias = Tensor::from_vec(1, 3, (0..3).map(|_| rng.random_range(-1.0..1.0)).collect());
        p.insert("classifier_c.weight".into(), w.clone());
        p.insert("classifier_c.bias".into(), bias.clone());
        let got = predict(&lin, &p, &h).unwrap();
        for c in 0..3 {
            let want = bias.get(0, c) + (0..3).map(|d| h.get(0, d) * w.get(d, c)).sum::<f64>();
            assert_abs_diff_eq!(got.get(0, c), want, epsilon = 1e-14);
        }
        assert!(predict(&lin, &p, &Tensor::zeros(1, 2)).is_err());
    }

    #[test]
    fn check_params_flags_missing_and_misshapen() {
        let m = model(CausalMode::Ecal, EncoderKind::EgatV2);
        let mut p = m.init(1);
        m.check_params(&p).unwrap();
        p.insert("classifier_c.bias".into(), Tensor::zeros(1, 5));
        assert!(matches!(m.check_params(&p), Err(Error::Shape(_))));
        let other = model(CausalMode::None, EncoderKind::Gcn).init(1);
        assert!(matches!(m.check_params(&other), Err(Error::MissingParam(_))));
    }
}
