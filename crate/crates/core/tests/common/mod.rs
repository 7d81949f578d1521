//! Dense, loop-based reference implementations of the encoders and the
//! score estimator. Each node loops over every other node and looks the
//! arc up, so nothing here shares code with the sparse kernels.

#![allow(dead_code)]

use std::collections::HashMap;

use ecal::autodiff::{ParamSet, Tensor};
use ecal::encoders::EncoderKind;
use ecal::graph::Graph;

pub const SLOPE: f64 = 0.2;
const SQUEEZE: f64 = 1e-12;

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        SLOPE * x
    }
}

fn param<'a>(p: &'a ParamSet, name: &str) -> &'a Tensor {
    p.get(name).unwrap_or_else(|| panic!("missing {name}"))
}

/// `x W` for a row vector `x`.
fn vecmat(x: &[f64], w: &Tensor) -> Vec<f64> {
    assert_eq!(x.len(), w.rows());
    (0..w.cols()).map(|c| (0..w.rows()).map(|r| x[r] * w.get(r, c)).sum()).collect()
}

fn affine(p: &ParamSet, prefix: &str, x: &[f64]) -> Vec<f64> {
    let mut y = vecmat(x, param(p, &format!("{prefix}.weight")));
    if let Some(b) = p.get(&format!("{prefix}.bias")) {
        for (v, bb) in y.iter_mut().zip(b.data()) {
            *v += bb;
        }
    }
    y
}

pub fn mlp(p: &ParamSet, prefix: &str, x: &[f64]) -> Vec<f64> {
    let h: Vec<f64> = affine(p, &format!("{prefix}.0"), x).into_iter().map(leaky).collect();
    affine(p, &format!("{prefix}.1"), &h)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

pub struct DenseOutput {
    pub nodes: Vec<Vec<f64>>,
    /// per arc index
    pub edges: Option<Vec<Vec<f64>>>,
    /// last layer, per arc index
    pub attention: Option<Vec<f64>>,
}

/// Runs a `depth`-layer encoder stored under `prefix` on node features `x`
/// and arc features `e` (rows indexed like `g.edges`).
pub fn dense_encoder(
    kind: EncoderKind,
    p: &ParamSet,
    prefix: &str,
    g: &Graph,
    x: &Tensor,
    e: &Tensor,
    depth: usize,
) -> DenseOutput {
    let n = g.num_nodes;
    let arc: HashMap<(usize, usize), usize> = g.edges.iter().enumerate().map(|(k, &a)| (a, k)).collect();
    let mut h: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).to_vec()).collect();
    let mut edge_in: Vec<Vec<f64>> = (0..g.num_arcs()).map(|k| e.row(k).to_vec()).collect();
    let mut edges_out = None;
    let mut attention = None;

    for l in 0..depth {
        let lp = format!("{prefix}.{l}");
        if kind == EncoderKind::Gcn {
            let deg: Vec<f64> = (0..n)
                .map(|i| 1.0 + (0..n).filter(|&j| arc.contains_key(&(i, j))).count() as f64)
                .collect();
            let w = param(p, &format!("{lp}.weight"));
            let b = param(p, &format!("{lp}.bias"));
            let xw: Vec<Vec<f64>> = h.iter().map(|r| vecmat(r, w)).collect();
            h = (0..n)
                .map(|i| {
                    let mut z: Vec<f64> = xw[i].iter().map(|v| v / deg[i]).collect();
                    for j in 0..n {
                        if arc.contains_key(&(i, j)) {
                            let c = 1.0 / (deg[i] * deg[j]).sqrt();
                            for (zz, v) in z.iter_mut().zip(&xw[j]) {
                                *zz += c * v;
                            }
                        }
                    }
                    z.iter().zip(b.data()).map(|(v, bb)| leaky(v + bb)).collect()
                })
                .collect();
            continue;
        }

        let xs: Vec<Vec<f64>> = h.iter().map(|r| vecmat(r, param(p, &format!("{lp}.w_src.weight")))).collect();
        let xd: Vec<Vec<f64>> = h.iter().map(|r| vecmat(r, param(p, &format!("{lp}.w_dst.weight")))).collect();
        let a = param(p, &format!("{lp}.attn.weight")).data().to_vec();
        let mut score = vec![0.0; g.num_arcs()];
        let mut layer_edges = vec![Vec::new(); g.num_arcs()];
        for i in 0..n {
            for j in 0..n {
                let Some(&k) = arc.get(&(i, j)) else { continue };
                score[k] = match kind {
                    EncoderKind::Gat => leaky(dot(&a, &cat(&[&xs[i], &xd[j]]))),
                    EncoderKind::EgatV1 => {
                        let ep = vecmat(&edge_in[k], param(p, &format!("{lp}.w_edge.weight")));
                        let s = leaky(dot(&a, &cat(&[&xs[i], &xd[j], &ep])));
                        layer_edges[k] = ep;
                        s
                    }
                    EncoderKind::EgatV2 => {
                        let ep = vecmat(&edge_in[k], param(p, &format!("{lp}.w_edge.weight")));
                        let eo: Vec<f64> = vecmat(&cat(&[&xs[i], &ep, &xd[j]]), param(p, &format!("{lp}.w_edge_out.weight")))
                            .into_iter()
                            .map(leaky)
                            .collect();
                        let s = dot(&a, &eo);
                        layer_edges[k] = eo;
                        s
                    }
                    EncoderKind::Gcn => unreachable!(),
                };
            }
        }
        let mut att = vec![0.0; g.num_arcs()];
        let d_h = xd[0].len();
        let new_h: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let nbrs: Vec<(usize, usize)> = (0..n).filter_map(|j| arc.get(&(i, j)).map(|&k| (j, k))).collect();
                let z: f64 = nbrs.iter().map(|&(_, k)| score[k].exp()).sum();
                let mut agg = vec![0.0; d_h];
                for &(j, k) in &nbrs {
                    att[k] = score[k].exp() / z;
                    for (v, xv) in agg.iter_mut().zip(&xd[j]) {
                        *v += att[k] * xv;
                    }
                }
                mlp(p, &format!("{lp}.mlp"), &agg)
            })
            .collect();
        h = new_h;
        attention = Some(att);
        if kind != EncoderKind::Gat {
            if kind == EncoderKind::EgatV2 {
                edge_in = layer_edges.clone();
            }
            edges_out = Some(layer_edges);
        }
    }
    DenseOutput {
        nodes: h,
        edges: edges_out,
        attention,
    }
}

/// First component of the two-way softmax, squeezed into (0, 1).
pub fn dense_score(logits: &[f64]) -> f64 {
    let p0 = logits[0].exp() / (logits[0].exp() + logits[1].exp());
    0.5 + (1.0 - 2.0 * SQUEEZE) * (p0 - 0.5)
}

/// Node and arc scores of an estimator stored under `estimator.*`.
pub fn dense_scores(kind: EncoderKind, p: &ParamSet, g: &Graph, depth: usize) -> (Vec<f64>, Vec<f64>) {
    let out = dense_encoder(kind, p, "estimator.encoder", g, &g.node_features, &g.edge_features, depth);
    let node = out.nodes.iter().map(|h| dense_score(&mlp(p, "estimator.mlp_node", h))).collect();
    let edge = match out.edges {
        Some(es) if p.contains("estimator.mlp_edge.0.weight") => {
            es.iter().map(|e| dense_score(&mlp(p, "estimator.mlp_edge", e))).collect()
        }
        _ => vec![0.5; g.num_arcs()],
    };
    (node, edge)
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &Tensor) -> f64 {
    let mut m = 0.0f64;
    for (r, row) in a.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            m = m.max((v - b.get(r, c)).abs());
        }
    }
    m
}

/// Largest gap between the sparse kernels and the dense loops over a few
/// random graphs of at most six nodes: every encoder kind at depth 2
/// (nodes, arcs and attention) and the ECAL score estimator.
pub fn oracle_gap(seed: u64) -> f64 {
    use ecal::causal::{CausalMode, CausalModel, ModelConfig};
    use ecal::encoders::Encoder;
    use ecal::graph::{random_graph, Batch};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gap = 0.0f64;
    for _ in 0..4 {
        let n = rng.random_range(1..=6);
        let g = random_graph(&mut rng, n, 3, 2, 2);
        let batch = Batch::new([&g]).unwrap();
        for kind in EncoderKind::ALL {
            let enc = Encoder::new(kind, "enc", 3, 2, 4, 2);
            let mut p = ParamSet::new();
            enc.init(&mut p, &mut rng);
            for (name, t) in p.iter_mut() {
                if name.ends_with(".bias") {
                    t.data_mut().iter_mut().for_each(|x| *x = rng.random_range(-0.5..0.5));
                }
            }
            let sparse = enc.evaluate(&p, &batch).unwrap();
            let dense = dense_encoder(kind, &p, "enc", &g, &g.node_features, &g.edge_features, 2);
            gap = gap.max(max_abs_diff(&dense.nodes, &sparse.node_embeddings));
            if let (Some(d), Some(s)) = (&dense.edges, &sparse.edge_embeddings) {
                gap = gap.max(max_abs_diff(d, s));
            }
            assert_eq!(dense.edges.is_some(), sparse.edge_embeddings.is_some(), "{kind}");
            if let (Some(d), Some(s)) = (&dense.attention, &sparse.attention) {
                gap = gap.max(d.iter().zip(s.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            }
        }
        let mut cfg = ModelConfig::new(EncoderKind::EgatV2, CausalMode::Ecal, 3, 2, 2);
        cfg.d_h = 4;
        let model = CausalModel::new(cfg).unwrap();
        let p = model.init(rng.random());
        let scores = model.estimate_causal_scores(&p, &batch).unwrap().unwrap();
        let (node, edge) = dense_scores(EncoderKind::EgatV2, &p, &g, cfg.depth);
        for (a, b) in node.iter().zip(&scores.alpha_node).chain(edge.iter().zip(&scores.alpha_edge)) {
            gap = gap.max((a - b).abs());
        }
    }
    gap
}
