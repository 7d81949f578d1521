//! Graph encoders: the edge-featured attention layers EGATv1 and EGATv2 and
//! the edge-blind baselines GAT and GCN.
//!
//! For an arc `(i, j)` the attention weight `a_ij` is normalized over all
//! arcs leaving `i`, and node `i` receives `sum_j a_ij X_j'`. A node with no
//! arcs receives the zero vector before its output MLP.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::autodiff::{Bindings, ParamSet, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::Batch;
use crate::nn::{Linear, Mlp, LEAKY_SLOPE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EncoderKind {
    Gcn,
    Gat,
    EgatV1,
    EgatV2,
}

impl EncoderKind {
    pub const ALL: [EncoderKind; 4] = [
        EncoderKind::Gcn,
        EncoderKind::Gat,
        EncoderKind::EgatV1,
        EncoderKind::EgatV2,
    ];

    pub fn uses_edge_features(self) -> bool {
        matches!(self, EncoderKind::EgatV1 | EncoderKind::EgatV2)
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderKind::Gcn => "gcn",
            EncoderKind::Gat => "gat",
            EncoderKind::EgatV1 => "egatv1",
            EncoderKind::EgatV2 => "egatv2",
        })
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcn" => Ok(EncoderKind::Gcn),
            "gat" => Ok(EncoderKind::Gat),
            "egatv1" => Ok(EncoderKind::EgatV1),
            "egatv2" => Ok(EncoderKind::EgatV2),
            other => Err(Error::Config(format!("unknown encoder `{other}`"))),
        }
    }
}

/// Parameter names of one attention layer.
#[derive(Clone, Debug)]
pub struct AttentionLayer {
    pub w_src: Linear,
    pub w_dst: Linear,
    /// absent for GAT
    pub w_edge: Option<Linear>,
    /// EGATv2 only: `3 d_h -> d_h`
    pub w_edge_out: Option<Linear>,
    /// `3 d_h` (EGATv1), `2 d_h` (GAT) or `d_h` (EGATv2) entries
    pub attn: Linear,
    pub mlp: Mlp,
}

#[derive(Clone, Debug)]
pub struct GcnLayer {
    pub linear: Linear,
}

#[derive(Clone, Debug)]
enum Layer {
    Attention(AttentionLayer),
    Gcn(GcnLayer),
}

/// Tape handles produced by an encoder forward pass.
#[derive(Clone, Debug)]
pub struct EncoderOutput {
    /// `num_nodes x d_h`
    pub nodes: Var,
    /// per-arc embeddings: `e'` for EGATv1, `e^out` for EGATv2
    pub edges: Option<Var>,
    /// per-arc attention column from the last layer
    pub attention: Option<Var>,
    /// nodes with an empty neighborhood
    pub isolated: Vec<usize>,
}

/// Concrete values of an [`EncoderOutput`].
#[derive(Clone, Debug)]
pub struct EncoderValues {
    pub node_embeddings: Tensor,
    pub edge_embeddings: Option<Tensor>,
    pub attention: Option<Tensor>,
    pub isolated: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub kind: EncoderKind,
    pub d_h: usize,
    pub slope: f64,
    layers: Vec<Layer>,
}

impl Encoder {
    /// A stack of `depth` layers with independent parameters under `prefix`.
    pub fn new(kind: EncoderKind, prefix: &str, d_v: usize, d_e: usize, d_h: usize, depth: usize) -> Self {
        assert!(depth >= 1, "encoder depth must be at least 1");
        let slope = LEAKY_SLOPE;
        let layers = (0..depth)
            .map(|l| {
                let p = format!("{prefix}.{l}");
                let d_in = if l == 0 { d_v } else { d_h };
                match kind {
                    EncoderKind::Gcn => Layer::Gcn(GcnLayer {
                        linear: Linear::new(&p, d_in, d_h, true),
                    }),
                    EncoderKind::Gat | EncoderKind::EgatV1 | EncoderKind::EgatV2 => {
                        // v2 consumes the previous layer's edge embeddings
                        let d_edge_in = if kind == EncoderKind::EgatV2 && l > 0 { d_h } else { d_e };
                        let w_edge = (kind != EncoderKind::Gat)
                            .then(|| Linear::new(&format!("{p}.w_edge"), d_edge_in, d_h, false));
                        let w_edge_out = (kind == EncoderKind::EgatV2)
                            .then(|| Linear::new(&format!("{p}.w_edge_out"), 3 * d_h, d_h, false));
                        let attn_width = match kind {
                            EncoderKind::Gat => 2 * d_h,
                            EncoderKind::EgatV1 => 3 * d_h,
                            _ => d_h,
                        };
                        Layer::Attention(AttentionLayer {
                            w_src: Linear::new(&format!("{p}.w_src"), d_in, d_h, false),
                            w_dst: Linear::new(&format!("{p}.w_dst"), d_in, d_h, false),
                            w_edge,
                            w_edge_out,
                            attn: Linear::new(&format!("{p}.attn"), attn_width, 1, false),
                            mlp: Mlp::new(&format!("{p}.mlp"), d_h, d_h, d_h, slope),
                        })
                    }
                }
            })
            .collect();
        Self {
            kind,
            d_h,
            slope,
            layers,
        }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn attention_layer(&self, l: usize) -> Option<&AttentionLayer> {
        match &self.layers[l] {
            Layer::Attention(a) => Some(a),
            Layer::Gcn(_) => None,
        }
    }

    pub fn gcn_layer(&self, l: usize) -> Option<&GcnLayer> {
        match &self.layers[l] {
            Layer::Gcn(g) => Some(g),
            Layer::Attention(_) => None,
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, params: &mut ParamSet, rng: &mut R) {
        for layer in &self.layers {
            match layer {
                Layer::Gcn(g) => g.linear.init(params, rng),
                Layer::Attention(a) => {
                    a.w_src.init(params, rng);
                    a.w_dst.init(params, rng);
                    if let Some(w) = &a.w_edge {
                        w.init(params, rng);
                    }
                    if let Some(w) = &a.w_edge_out {
                        w.init(params, rng);
                    }
                    a.attn.init(params, rng);
                    a.mlp.init(params, rng);
                }
            }
        }
    }

    /// Encodes node features `x` and arc features `e` over the adjacency of
    /// `batch`. The features may be masked versions of the batch's own.
    pub fn forward(&self, tape: &mut Tape, b: &Bindings, batch: &Batch, x: Var, e: Var) -> Result<EncoderOutput> {
        let n = batch.num_nodes();
        let mut h = x;
        let mut edges = None;
        let mut attention = None;
        let gcn_norm = matches!(self.kind, EncoderKind::Gcn).then(|| gcn_normalization(batch));
        for layer in &self.layers {
            match layer {
                Layer::Gcn(g) => {
                    let (arc_w, self_w) = gcn_norm.as_ref().unwrap();
                    let xw = g.linear.forward_no_bias(tape, b, h)?;
                    let msgs = tape.gather_rows(xw, batch.dst.clone());
                    let aw = tape.constant(arc_w.clone());
                    let msgs = tape.scale_rows(msgs, aw);
                    let agg = tape.segment_sum(msgs, batch.src.clone(), n);
                    let sw = tape.constant(self_w.clone());
                    let own = tape.scale_rows(xw, sw);
                    let z = tape.add(agg, own);
                    let z = g.linear.add_bias(tape, b, z)?;
                    h = tape.leaky_relu(z, self.slope);
                }
                Layer::Attention(a) => {
                    let edge_in = match self.kind {
                        EncoderKind::EgatV2 => edges.unwrap_or(e),
                        _ => e,
                    };
                    let out = attention_layer_forward(self.kind, a, self.slope, tape, b, batch, h, edge_in)?;
                    h = out.0;
                    edges = out.1;
                    attention = Some(out.2);
                }
            }
        }
        Ok(EncoderOutput {
            nodes: h,
            edges,
            attention,
            isolated: batch.isolated_nodes(),
        })
    }

    /// Runs the encoder on the batch's own features and returns values.
    pub fn evaluate(&self, params: &ParamSet, batch: &Batch) -> Result<EncoderValues> {
        let mut tape = Tape::new();
        let b = params.bind_constants(&mut tape);
        let x = tape.constant(batch.node_features.clone());
        let e = tape.constant(batch.edge_features.clone());
        let out = self.forward(&mut tape, &b, batch, x, e)?;
        Ok(EncoderValues {
            node_embeddings: tape.value(out.nodes).clone(),
            edge_embeddings: out.edges.map(|v| tape.value(v).clone()),
            attention: out.attention.map(|v| tape.value(v).clone()),
            isolated: out.isolated,
        })
    }
}

impl Linear {
    fn forward_no_bias(&self, tape: &mut Tape, b: &Bindings, x: Var) -> Result<Var> {
        let w = b.get(&self.weight)?;
        Ok(tape.matmul(x, w))
    }

    fn add_bias(&self, tape: &mut Tape, b: &Bindings, x: Var) -> Result<Var> {
        match &self.bias {
            Some(name) => {
                let bias = b.get(name)?;
                Ok(tape.add_row(x, bias))
            }
            None => Ok(x),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn attention_layer_forward(
    kind: EncoderKind,
    layer: &AttentionLayer,
    slope: f64,
    tape: &mut Tape,
    b: &Bindings,
    batch: &Batch,
    h: Var,
    e: Var,
) -> Result<(Var, Option<Var>, Var)> {
    let n = batch.num_nodes();
    let xs = layer.w_src.forward(tape, b, h)?;
    let xd = layer.w_dst.forward(tape, b, h)?;
    let xi = tape.gather_rows(xs, batch.src.clone());
    let xj = tape.gather_rows(xd, batch.dst.clone());

    let (scores, edge_out) = match kind {
        EncoderKind::Gat => {
            let cat = tape.concat_cols(&[xi, xj]);
            let s = layer.attn.forward(tape, b, cat)?;
            (tape.leaky_relu(s, slope), None)
        }
        EncoderKind::EgatV1 => {
            let ep = layer.w_edge.as_ref().unwrap().forward(tape, b, e)?;
            let cat = tape.concat_cols(&[xi, xj, ep]);
            let s = layer.attn.forward(tape, b, cat)?;
            (tape.leaky_relu(s, slope), Some(ep))
        }
        EncoderKind::EgatV2 => {
            let ep = layer.w_edge.as_ref().unwrap().forward(tape, b, e)?;
            let cat = tape.concat_cols(&[xi, ep, xj]);
            let eo = layer.w_edge_out.as_ref().unwrap().forward(tape, b, cat)?;
            let eo = tape.leaky_relu(eo, slope);
            (layer.attn.forward(tape, b, eo)?, Some(eo))
        }
        EncoderKind::Gcn => unreachable!("gcn has no attention layer"),
    };

    let att = tape.segment_softmax(scores, batch.src.clone());
    let msgs = tape.scale_rows(xj, att);
    let agg = tape.segment_sum(msgs, batch.src.clone(), n);
    let out = layer.mlp.forward(tape, b, agg)?;
    Ok((out, edge_out, att))
}

/// Per-arc weights `1/sqrt(d_i d_j)` and per-node self weights `1/d_i` of
/// `D^{-1/2} (A + I) D^{-1/2}`, with `d_i` the row sums of `A + I`.
pub fn gcn_normalization(batch: &Batch) -> (Tensor, Tensor) {
    let mut deg = vec![1.0f64; batch.num_nodes()];
    for &s in batch.src.iter() {
        deg[s] += 1.0;
    }
    let arc = batch
        .src
        .iter()
        .zip(batch.dst.iter())
        .map(|(&s, &d)| 1.0 / (deg[s] * deg[d]).sqrt())
        .collect();
    let own = deg.iter().map(|d| 1.0 / d).collect();
    (Tensor::column(arc), Tensor::column(own))
}
