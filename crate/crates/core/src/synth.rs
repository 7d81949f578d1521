//! Synthetic benchmark whose label lives only in edge features.
//!
//! Each graph is a random tree with a five-node motif hanging off it by one
//! background edge. Both classes share the same motif shape. Motif arcs
//! carry features drawn around `+mu` (class 0) or `-mu` (class 1) with
//! `mu = edge_signal_strength`; background arcs are centered at zero and
//! node features are pure noise.

use std::fmt::Write as _;
use std::fs;
use std::ops::RangeInclusive;
use std::path::Path;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::graph::format::{content_lines, header_field, parse_err};
use crate::graph::{Dataset, Graph, Split};

/// Spread of every edge feature around its class mean.
pub const EDGE_STD: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Motif {
    #[default]
    Cycle5,
    /// a square with a roof node on one side
    House,
}

impl Motif {
    pub fn num_nodes(self) -> usize {
        5
    }

    pub fn edges(self) -> &'static [(usize, usize)] {
        match self {
            Motif::Cycle5 => &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)],
            Motif::House => &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 4), (1, 4)],
        }
    }
}

impl std::fmt::Display for Motif {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Motif::Cycle5 => "cycle5",
            Motif::House => "house",
        })
    }
}

impl FromStr for Motif {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cycle5" => Ok(Motif::Cycle5),
            "house" => Ok(Motif::House),
            other => Err(Error::Config(format!("unknown motif `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub num_graphs: usize,
    /// size of the random tree the motif is attached to
    pub base_nodes: RangeInclusive<usize>,
    pub motif: Motif,
    pub edge_signal_strength: f64,
    pub node_noise_std: f64,
    /// minority/majority frequency; only applied to the train split
    pub imbalance_ratio: f64,
    pub split: Split,
    pub d_v: usize,
    pub d_e: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_graphs: 200,
            base_nodes: 5..=10,
            motif: Motif::Cycle5,
            edge_signal_strength: 0.8,
            node_noise_std: 1.0,
            imbalance_ratio: 1.0,
            split: Split::Train,
            d_v: 4,
            d_e: 4,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub const NUM_CLASSES: usize = 2;

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.base_nodes.is_empty() || *self.base_nodes.start() < self.motif.num_nodes() {
            return bad(format!(
                "base graph range {:?} must be non-empty with a minimum of at least the motif size {}",
                self.base_nodes,
                self.motif.num_nodes()
            ));
        }
        if !(0.0..=1.0).contains(&self.edge_signal_strength) {
            return bad(format!("edge signal strength {} outside [0, 1]", self.edge_signal_strength));
        }
        if !(self.node_noise_std >= 0.0 && self.node_noise_std.is_finite()) {
            return bad(format!("node noise std {} must be finite and non-negative", self.node_noise_std));
        }
        if !(self.imbalance_ratio > 0.0 && self.imbalance_ratio <= 1.0) {
            return bad(format!("imbalance ratio {} outside (0, 1]", self.imbalance_ratio));
        }
        if self.d_v == 0 || self.d_e == 0 {
            return bad("feature widths must be positive".into());
        }
        Ok(())
    }

    /// Graphs per class: class 0 is the majority of an imbalanced split.
    pub fn class_counts(&self) -> Result<[usize; 2]> {
        let n = self.num_graphs;
        if self.split != Split::Train || self.imbalance_ratio == 1.0 {
            return Ok([n - n / 2, n / 2]);
        }
        let majority = (n as f64 / (1.0 + self.imbalance_ratio)).round() as usize;
        let minority = n - majority;
        if minority == 0 {
            return Err(Error::Config(format!(
                "imbalance ratio {} leaves no minority graphs out of {n}",
                self.imbalance_ratio
            )));
        }
        Ok([majority, minority])
    }
}

/// Motif nodes and arcs of every graph, sorted ascending.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GroundTruth {
    pub nodes: Vec<Vec<usize>>,
    pub arcs: Vec<Vec<usize>>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Per-arc 0/1 indicator of graph `k`.
    pub fn arc_indicator(&self, k: usize, num_arcs: usize) -> Vec<bool> {
        let mut out = vec![false; num_arcs];
        for &a in &self.arcs[k] {
            out[a] = true;
        }
        out
    }

    pub fn check_against(&self, ds: &Dataset) -> Result<()> {
        if self.len() != ds.len() {
            return Err(Error::InvalidDataset(format!(
                "truth covers {} graphs, dataset has {}",
                self.len(),
                ds.len()
            )));
        }
        for (k, g) in ds.graphs.iter().enumerate() {
            if self.nodes[k].iter().any(|&i| i >= g.num_nodes) || self.arcs[k].iter().any(|&a| a >= g.num_arcs()) {
                return Err(Error::InvalidGraph {
                    graph: k,
                    rule: "truth index out of range".into(),
                });
            }
        }
        Ok(())
    }
}

const TRUTH_MAGIC: &str = "ECAL-TRUTH v1";

pub fn save_truth(truth: &GroundTruth, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("{TRUTH_MAGIC} N={}\n", truth.len());
    for (nodes, arcs) in truth.nodes.iter().zip(&truth.arcs) {
        for (tag, list) in [("N", nodes), ("A", arcs)] {
            out.push_str(tag);
            for i in list {
                let _ = write!(out, " {i}");
            }
            out.push('\n');
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_truth(path: impl AsRef<Path>) -> Result<GroundTruth> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = content_lines(&text);
    let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "missing header"))?;
    let n: usize = match header.strip_prefix(TRUTH_MAGIC) {
        Some(rest) => header_field(hl, rest.trim(), "N")?,
        None => return Err(parse_err(hl, format!("expected `{TRUTH_MAGIC} N=..`"))),
    };
    let mut truth = GroundTruth::default();
    let mut next_list = |tag: &str, last: usize| -> Result<(usize, Vec<usize>)> {
        let (l, line) = lines
            .next()
            .ok_or_else(|| parse_err(last + 1, format!("unexpected end of file, expected `{tag}` line")))?;
        let mut toks = line.split_whitespace();
        if toks.next() != Some(tag) {
            return Err(parse_err(l, format!("expected `{tag}` line")));
        }
        let list = toks
            .map(|t| t.parse().map_err(|_| parse_err(l, format!("invalid index `{t}`"))))
            .collect::<Result<_>>()?;
        Ok((l, list))
    };
    let mut last = hl;
    for _ in 0..n {
        let (l, nodes) = next_list("N", last)?;
        let (l, arcs) = next_list("A", l)?;
        last = l;
        truth.nodes.push(nodes);
        truth.arcs.push(arcs);
    }
    if let Some((l, _)) = lines.next() {
        return Err(parse_err(l, format!("content after the declared {n} graphs")));
    }
    Ok(truth)
}

/// Independent stream for graph `index` of a split.
fn graph_rng(seed: u64, split: Split, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tag = match split {
        Split::Train => 1,
        Split::Valid => 2,
        Split::Test => 3,
    };
    rng.set_stream(((index as u64) << 2) | tag);
    rng
}

fn one_graph(cfg: &SynthConfig, label: usize, rng: &mut ChaCha8Rng) -> (Graph, Vec<usize>, Vec<usize>) {
    let base = rng.random_range(cfg.base_nodes.clone());
    let m = cfg.motif.num_nodes();
    let n = base + m;
    // (edge, is_motif) in local numbering: tree first, then the motif
    let mut edges: Vec<((usize, usize), bool)> = (1..base).map(|k| ((rng.random_range(0..k), k), false)).collect();
    edges.extend(cfg.motif.edges().iter().map(|&(a, b)| ((base + a, base + b), true)));
    edges.push(((rng.random_range(0..base), base + rng.random_range(0..m)), false));
    edges.shuffle(rng);

    let mut relabel: Vec<usize> = (0..n).collect();
    relabel.shuffle(rng);

    let node_noise = Normal::new(0.0, cfg.node_noise_std).expect("validated std");
    let mut nf = Tensor::zeros(n, cfg.d_v);
    for i in 0..n {
        for x in nf.row_mut(relabel[i]) {
            *x = node_noise.sample(rng);
        }
    }
    let mu = if label == 0 { cfg.edge_signal_strength } else { -cfg.edge_signal_strength };
    let motif_dist = Normal::new(mu, EDGE_STD).expect("finite");
    let background = Normal::new(0.0, EDGE_STD).expect("finite");
    let mut und = Vec::with_capacity(edges.len());
    let mut feats = Vec::with_capacity(edges.len());
    for &((a, b), motif) in &edges {
        let dist = if motif { &motif_dist } else { &background };
        und.push((relabel[a], relabel[b]));
        feats.push((0..cfg.d_e).map(|_| dist.sample(rng)).collect::<Vec<f64>>());
    }
    let g = Graph::from_undirected(nf, &und, &feats, cfg.d_e, label);

    let mut truth_nodes: Vec<usize> = (base..n).map(|i| relabel[i]).collect();
    truth_nodes.sort_unstable();
    // each undirected edge k became arcs 2k and 2k + 1
    let truth_arcs = edges
        .iter()
        .enumerate()
        .filter(|(_, e)| e.1)
        .flat_map(|(k, _)| [2 * k, 2 * k + 1])
        .collect();
    (g, truth_nodes, truth_arcs)
}

/// Generates one split. Labels are shuffled; every graph has its own
/// random stream derived from `(seed, split, index)`.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<(Dataset, GroundTruth)> {
    cfg.validate()?;
    let [c0, c1] = cfg.class_counts()?;
    let mut labels: Vec<usize> = std::iter::repeat_n(0, c0).chain(std::iter::repeat_n(1, c1)).collect();
    labels.shuffle(&mut graph_rng(cfg.seed, cfg.split, usize::MAX >> 2));

    let mut ds = Dataset::new(SynthConfig::NUM_CLASSES, cfg.d_v, cfg.d_e, cfg.split);
    let mut truth = GroundTruth::default();
    for (k, &y) in labels.iter().enumerate() {
        let (g, nodes, arcs) = one_graph(cfg, y, &mut graph_rng(cfg.seed, cfg.split, k));
        ds.graphs.push(g);
        truth.nodes.push(nodes);
        truth.arcs.push(arcs);
    }
    Ok((ds, truth))
}

/// Train, validation and test splits generated from one configuration.
/// Only the train split is imbalanced.
#[derive(Clone, Debug)]
pub struct Benchmark {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
    pub train_truth: GroundTruth,
    pub valid_truth: GroundTruth,
    pub test_truth: GroundTruth,
}

pub fn generate_benchmark(cfg: &SynthConfig, num_valid: usize, num_test: usize) -> Result<Benchmark> {
    let split = |split, num_graphs| {
        generate_dataset(&SynthConfig {
            split,
            num_graphs,
            ..cfg.clone()
        })
    };
    let (train, train_truth) = split(Split::Train, cfg.num_graphs)?;
    let (valid, valid_truth) = split(Split::Valid, num_valid)?;
    let (test, test_truth) = split(Split::Test, num_test)?;
    Ok(Benchmark {
        train,
        valid,
        test,
        train_truth,
        valid_truth,
        test_truth,
    })
}

/// Indices kept when every non-majority class is subsampled to
/// `round(rho * majority)` graphs.
pub fn imbalance_selection(ds: &Dataset, rho: f64, seed: u64) -> Result<Vec<usize>> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Config(format!("imbalance ratio {rho} outside (0, 1]")));
    }
    let hist = ds.class_histogram();
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::InvalidDataset("need at least two classes present".into()));
    }
    let majority_class = (0..hist.len()).max_by_key(|&c| (hist[c], std::cmp::Reverse(c))).unwrap();
    let target = (rho * hist[majority_class] as f64).round() as usize;
    if target == 0 {
        return Err(Error::Config(format!("imbalance ratio {rho} leaves no minority graphs")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; ds.len()];
    for c in 0..hist.len() {
        let members: Vec<usize> = (0..ds.len()).filter(|&k| ds.graphs[k].label == c).collect();
        if c == majority_class || members.len() <= target {
            members.iter().for_each(|&k| keep[k] = true);
        } else {
            for i in index::sample(&mut rng, members.len(), target) {
                keep[members[i]] = true;
            }
        }
    }
    Ok((0..ds.len()).filter(|&k| keep[k]).collect())
}

/// Subsamples the minority class so minority/majority is `rho`. Graph order
/// is preserved.
pub fn apply_imbalance(ds: &Dataset, rho: f64, seed: u64) -> Result<Dataset> {
    let keep = imbalance_selection(ds, rho, seed)?;
    Ok(ds.subset(&keep))
}

/// Picks `floor(p * num_arcs)` arcs across the whole dataset and shuffles
/// their feature rows among themselves.
pub fn permute_edge_features(ds: &Dataset, proportion: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&proportion) {
        return Err(Error::Config(format!("permutation proportion {proportion} outside [0, 1]")));
    }
    let mut out = ds.clone();
    let total = ds.num_arcs();
    let k = (proportion * total as f64).floor() as usize;
    if k < 2 {
        return Ok(out);
    }
    let mut location = Vec::with_capacity(total);
    for (g, graph) in ds.graphs.iter().enumerate() {
        location.extend((0..graph.num_arcs()).map(|a| (g, a)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = index::sample(&mut rng, total, k).into_vec();
    chosen.sort_unstable();
    let mut order = chosen.clone();
    order.shuffle(&mut rng);
    for (&to, &from) in chosen.iter().zip(&order) {
        let (gt, at) = location[to];
        let (gf, af) = location[from];
        out.graphs[gt]
            .edge_features
            .row_mut(at)
            .copy_from_slice(ds.graphs[gf].edge_features.row(af));
    }
    Ok(out)
}
