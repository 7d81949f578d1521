use std::sync::Arc;

use super::Graph;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Several graphs concatenated into one disjoint union.
///
/// Node and arc indices are global; `node_graph` and `edge_graph` give the
/// owning graph of each row and are nondecreasing.
#[derive(Clone, Debug)]
pub struct Batch {
    pub node_features: Tensor,
    pub edge_features: Tensor,
    pub src: Arc<[usize]>,
    pub dst: Arc<[usize]>,
    pub node_graph: Arc<[usize]>,
    pub edge_graph: Arc<[usize]>,
    pub labels: Arc<[usize]>,
    /// `num_graphs + 1` prefix offsets into the node rows.
    pub node_offsets: Vec<usize>,
    /// `num_graphs + 1` prefix offsets into the arc rows.
    pub edge_offsets: Vec<usize>,
}

impl Batch {
    pub fn new<'a, I>(graphs: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Graph>,
    {
        let graphs: Vec<&Graph> = graphs.into_iter().collect();
        let first = graphs
            .first()
            .ok_or_else(|| Error::InvalidDataset("cannot batch zero graphs".into()))?;
        let (d_v, d_e) = (first.d_v(), first.d_e());

        let total_nodes: usize = graphs.iter().map(|g| g.num_nodes).sum();
        let total_arcs: usize = graphs.iter().map(|g| g.num_arcs()).sum();
        let mut nf = Vec::with_capacity(total_nodes * d_v);
        let mut ef = Vec::with_capacity(total_arcs * d_e);
        let mut src = Vec::with_capacity(total_arcs);
        let mut dst = Vec::with_capacity(total_arcs);
        let mut node_graph = Vec::with_capacity(total_nodes);
        let mut edge_graph = Vec::with_capacity(total_arcs);
        let mut labels = Vec::with_capacity(graphs.len());
        let mut node_offsets = vec![0];
        let mut edge_offsets = vec![0];

        for (k, g) in graphs.iter().enumerate() {
            if g.d_v() != d_v || g.d_e() != d_e {
                return Err(Error::FeatureWidth {
                    expected_dv: d_v,
                    expected_de: d_e,
                    dv: g.d_v(),
                    de: g.d_e(),
                });
            }
            let base = *node_offsets.last().unwrap();
            nf.extend_from_slice(g.node_features.data());
            ef.extend_from_slice(g.edge_features.data());
            for &(s, d) in &g.edges {
                src.push(base + s);
                dst.push(base + d);
            }
            node_graph.extend(std::iter::repeat_n(k, g.num_nodes));
            edge_graph.extend(std::iter::repeat_n(k, g.num_arcs()));
            labels.push(g.label);
            node_offsets.push(base + g.num_nodes);
            edge_offsets.push(edge_offsets.last().unwrap() + g.num_arcs());
        }

        Ok(Self {
            node_features: Tensor::from_vec(total_nodes, d_v, nf),
            edge_features: Tensor::from_vec(total_arcs, d_e, ef),
            src: src.into(),
            dst: dst.into(),
            node_graph: node_graph.into(),
            edge_graph: edge_graph.into(),
            labels: labels.into(),
            node_offsets,
            edge_offsets,
        })
    }

    pub fn num_graphs(&self) -> usize {
        self.labels.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.node_features.rows()
    }

    pub fn num_arcs(&self) -> usize {
        self.src.len()
    }

    pub fn d_v(&self) -> usize {
        self.node_features.cols()
    }

    pub fn d_e(&self) -> usize {
        self.edge_features.cols()
    }

    /// Nodes with no outgoing arc, i.e. an empty neighborhood.
    pub fn isolated_nodes(&self) -> Vec<usize> {
        let mut has = vec![false; self.num_nodes()];
        for &s in self.src.iter() {
            has[s] = true;
        }
        (0..self.num_nodes()).filter(|&i| !has[i]).collect()
    }

    /// Splits the batch back into its graphs using the segment offsets.
    pub fn unbatch(&self) -> Vec<Graph> {
        (0..self.num_graphs())
            .map(|k| {
                let (n0, n1) = (self.node_offsets[k], self.node_offsets[k + 1]);
                let (e0, e1) = (self.edge_offsets[k], self.edge_offsets[k + 1]);
                let d_v = self.d_v();
                let d_e = self.d_e();
                Graph {
                    num_nodes: n1 - n0,
                    edges: (e0..e1).map(|e| (self.src[e] - n0, self.dst[e] - n0)).collect(),
                    node_features: Tensor::from_vec(
                        n1 - n0,
                        d_v,
                        self.node_features.data()[n0 * d_v..n1 * d_v].to_vec(),
                    ),
                    edge_features: Tensor::from_vec(
                        e1 - e0,
                        d_e,
                        self.edge_features.data()[e0 * d_e..e1 * d_e].to_vec(),
                    ),
                    label: self.labels[k],
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::graph::random_graph;

    #[test]
    fn single_graph_membership_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_graph(&mut rng, 4, 2, 3, 2);
        let b = Batch::new([&g]).unwrap();
        assert!(b.node_graph.iter().all(|&k| k == 0));
        assert!(b.edge_graph.iter().all(|&k| k == 0));
    }

    #[test]
    fn two_graph_membership() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_graph(&mut rng, 2, 2, 1, 2);
        let b = random_graph(&mut rng, 3, 2, 1, 2);
        let batch = Batch::new([&a, &b]).unwrap();
        assert_eq!(&*batch.node_graph, &[0, 0, 1, 1, 1]);
    }

    #[test]
    fn unbatch_recovers_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let graphs: Vec<Graph> = (1..=5).map(|n| random_graph(&mut rng, n + 1, 3, 2, 2)).collect();
        let batch = Batch::new(&graphs).unwrap();
        assert_eq!(batch.unbatch(), graphs);
        assert!(batch.node_graph.windows(2).all(|w| w[0] <= w[1]));
        assert!(batch.edge_graph.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn heterogeneous_widths_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_graph(&mut rng, 3, 2, 1, 2);
        let b = random_graph(&mut rng, 3, 3, 1, 2);
        assert!(matches!(Batch::new([&a, &b]), Err(Error::FeatureWidth { .. })));
        assert!(Batch::new(std::iter::empty::<&Graph>()).is_err());
    }
}
