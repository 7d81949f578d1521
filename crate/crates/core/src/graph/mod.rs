//! Attributed graphs, datasets and batches.
//!
//! Adjacency is a directed arc list. An arc `(i, j)` means `j` is in the
//! neighborhood of `i`: attention over the arcs leaving `i` is normalized
//! per `i`, and the message `X_j'` is aggregated into node `i`. Undirected
//! graphs store both arcs with identical feature rows.

mod batch;
pub(crate) mod format;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

pub use batch::Batch;
pub use format::{load_dataset, load_dataset_with, save_dataset, LoadOptions};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    pub num_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    /// `num_nodes x d_v`
    pub node_features: Tensor,
    /// `num_arcs x d_e`
    pub edge_features: Tensor,
    pub label: usize,
}

impl Graph {
    /// Builds a graph from undirected edges, expanding each `{i, j}` into the
    /// arcs `(i, j)` and `(j, i)` sharing the same feature row.
    pub fn from_undirected(
        node_features: Tensor,
        edges: &[(usize, usize)],
        edge_features: &[Vec<f64>],
        d_e: usize,
        label: usize,
    ) -> Self {
        assert_eq!(edges.len(), edge_features.len());
        let mut arcs = Vec::with_capacity(2 * edges.len());
        let mut feats = Vec::with_capacity(2 * edges.len() * d_e);
        for (&(i, j), f) in edges.iter().zip(edge_features) {
            assert_eq!(f.len(), d_e);
            arcs.push((i, j));
            feats.extend_from_slice(f);
            arcs.push((j, i));
            feats.extend_from_slice(f);
        }
        Self {
            num_nodes: node_features.rows(),
            edge_features: Tensor::from_vec(arcs.len(), d_e, feats),
            edges: arcs,
            node_features,
            label,
        }
    }

    pub fn num_arcs(&self) -> usize {
        self.edges.len()
    }

    pub fn d_v(&self) -> usize {
        self.node_features.cols()
    }

    pub fn d_e(&self) -> usize {
        self.edge_features.cols()
    }

    /// Checks the structural invariants; `index` is used in error messages.
    pub fn validate(&self, index: usize, allow_self_loops: bool) -> Result<()> {
        let bad = |rule: &str| Error::InvalidGraph {
            graph: index,
            rule: rule.to_string(),
        };
        if self.num_nodes == 0 {
            return Err(bad("graph has no nodes"));
        }
        if self.node_features.rows() != self.num_nodes {
            return Err(bad("node feature row count differs from num_nodes"));
        }
        if self.edge_features.rows() != self.edges.len() {
            return Err(bad("edge feature row count differs from arc count"));
        }
        let mut seen = HashSet::with_capacity(self.edges.len());
        for &(s, d) in &self.edges {
            if s >= self.num_nodes || d >= self.num_nodes {
                return Err(bad("node index out of range"));
            }
            if s == d && !allow_self_loops {
                return Err(bad("self-loop not allowed"));
            }
            if !seen.insert((s, d)) {
                return Err(bad("duplicate arc"));
            }
        }
        if !self.node_features.is_finite() || !self.edge_features.is_finite() {
            return Err(bad("non-finite feature value"));
        }
        Ok(())
    }
}

/// Relabels nodes: node `i` becomes `perm[i]`. Arc feature rows stay with
/// their arcs and keep their order in the arc list.
pub fn permute_nodes(g: &Graph, perm: &[usize]) -> Result<Graph> {
    let n = g.num_nodes;
    if perm.len() != n {
        return Err(Error::NotAPermutation(format!(
            "length {} for {n} nodes",
            perm.len()
        )));
    }
    let mut hit = vec![false; n];
    for &p in perm {
        if p >= n || hit[p] {
            return Err(Error::NotAPermutation(format!("{perm:?}")));
        }
        hit[p] = true;
    }
    let mut nf = Tensor::zeros(n, g.d_v());
    for (i, &p) in perm.iter().enumerate() {
        nf.row_mut(p).copy_from_slice(g.node_features.row(i));
    }
    Ok(Graph {
        num_nodes: n,
        edges: g.edges.iter().map(|&(s, d)| (perm[s], perm[d])).collect(),
        node_features: nf,
        edge_features: g.edge_features.clone(),
        label: g.label,
    })
}

pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Random undirected graph: each pair of nodes is joined with probability
/// 1/2, features uniform in `[-1, 1)`. Used by tests and gradient checks.
pub fn random_graph<R: Rng + ?Sized>(rng: &mut R, n: usize, d_v: usize, d_e: usize, num_classes: usize) -> Graph {
    let nf = Tensor::from_vec(n, d_v, (0..n * d_v).map(|_| rng.random_range(-1.0..1.0)).collect());
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(0.5) {
                edges.push((i, j));
            }
        }
    }
    let feats: Vec<Vec<f64>> = edges
        .iter()
        .map(|_| (0..d_e).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    Graph::from_undirected(nf, &edges, &feats, d_e, rng.random_range(0..num_classes))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Split {
    #[default]
    Train,
    Valid,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split tag `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub graphs: Vec<Graph>,
    pub num_classes: usize,
    pub d_v: usize,
    pub d_e: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(num_classes: usize, d_v: usize, d_e: usize, split: Split) -> Self {
        Self {
            graphs: Vec::new(),
            num_classes,
            d_v,
            d_e,
            split,
        }
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn num_arcs(&self) -> usize {
        self.graphs.iter().map(Graph::num_arcs).sum()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.graphs.iter().map(|g| g.label).collect()
    }

    /// Number of graphs per class.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_classes];
        for g in &self.graphs {
            h[g.label] += 1;
        }
        h
    }

    pub fn validate(&self, allow_self_loops: bool) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::InvalidDataset("num_classes must be positive".into()));
        }
        for (k, g) in self.graphs.iter().enumerate() {
            if g.d_v() != self.d_v || g.d_e() != self.d_e {
                return Err(Error::InvalidGraph {
                    graph: k,
                    rule: format!(
                        "feature widths d_v={}, d_e={} differ from dataset d_v={}, d_e={}",
                        g.d_v(),
                        g.d_e(),
                        self.d_v,
                        self.d_e
                    ),
                });
            }
            if g.label >= self.num_classes {
                return Err(Error::InvalidGraph {
                    graph: k,
                    rule: format!("label {} not below C={}", g.label, self.num_classes),
                });
            }
            g.validate(k, allow_self_loops)?;
        }
        Ok(())
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            graphs: indices.iter().map(|&i| self.graphs[i].clone()).collect(),
            ..self.empty_like()
        }
    }

    pub fn empty_like(&self) -> Dataset {
        Dataset::new(self.num_classes, self.d_v, self.d_e, self.split)
    }
}
