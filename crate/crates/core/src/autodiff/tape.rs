use std::sync::Arc;

use super::tensor::{matmul, matmul_nt, matmul_tn, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Arc<[usize]>),
    LeakyRelu(Var, f64),
    SegmentSoftmax(Var, Arc<[usize]>),
    ScaleRows(Var, Var),
    SegmentSum(Var, Arc<[usize]>),
    SegmentMean(Var, Arc<[usize]>, Vec<f64>),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    SelectCol(Var, usize),
    OneMinus(Var),
    Pick(Var, Arc<[usize]>),
    Sum(Var),
    Mean(Var),
    Scale(Var, f64),
    AddScalar(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::AddRow(..) => "add_row",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::ConcatCols(..) => "concat_cols",
            Op::GatherRows(..) => "gather_rows",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::SegmentSoftmax(..) => "segment_softmax",
            Op::ScaleRows(..) => "scale_rows",
            Op::SegmentSum(..) => "segment_sum",
            Op::SegmentMean(..) => "segment_mean",
            Op::SoftmaxRows(..) => "softmax_rows",
            Op::LogSoftmaxRows(..) => "log_softmax_rows",
            Op::SelectCol(..) => "select_col",
            Op::OneMinus(..) => "one_minus",
            Op::Pick(..) => "pick",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
        }
    }
}

struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Records a computation for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the node list is always a
/// topological order and the backward pass is a single reverse sweep.
pub struct Tape {
    nodes: Vec<Node>,
    first_non_finite: Option<&'static str>,
    min_kink_distance: f64,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            first_non_finite: None,
            min_kink_distance: f64::INFINITY,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Name of the first operation whose output was not finite, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.first_non_finite
    }

    /// Smallest |input| seen by any LeakyReLU on this tape.
    pub fn min_kink_distance(&self) -> f64 {
        self.min_kink_distance
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        if self.first_non_finite.is_none() && !value.is_finite() {
            self.first_non_finite = Some(op.name());
        }
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(Op::Leaf, value, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = matmul(self.value(a), self.value(b));
        let rg = self.rg(&[a, b]);
        self.push(Op::MatMul(a, b), value, rg)
    }

    /// Adds a `1 x m` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let av = self.value(a);
        let bv = self.value(row);
        assert_eq!(bv.rows(), 1, "add_row expects a single row");
        assert_eq!(av.cols(), bv.cols(), "add_row width");
        let mut out = av.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        let rg = self.rg(&[a, row]);
        self.push(Op::AddRow(a, row), out, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "add shapes");
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::from_vec(av.rows(), av.cols(), data);
        let rg = self.rg(&[a, b]);
        self.push(Op::Add(a, b), out, rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "mul shapes");
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::from_vec(av.rows(), av.cols(), data);
        let rg = self.rg(&[a, b]);
        self.push(Op::Mul(a, b), out, rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                assert_eq!(self.value(p).rows(), rows, "concat_cols row counts");
                self.value(p).cols()
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::from_vec(rows, total, data);
        let rg = self.rg(parts);
        self.push(Op::ConcatCols(parts.to_vec()), out, rg)
    }

    /// `out[r] = a[index[r]]`.
    pub fn gather_rows(&mut self, a: Var, index: Arc<[usize]>) -> Var {
        let av = self.value(a);
        let cols = av.cols();
        let mut data = Vec::with_capacity(index.len() * cols);
        for &i in index.iter() {
            data.extend_from_slice(av.row(i));
        }
        let out = Tensor::from_vec(index.len(), cols, data);
        let rg = self.rg(&[a]);
        self.push(Op::GatherRows(a, index), out, rg)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let av = self.value(a);
        let mut kink = self.min_kink_distance;
        let data = av
            .data()
            .iter()
            .map(|&x| {
                kink = kink.min(x.abs());
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            })
            .collect();
        let out = Tensor::from_vec(av.rows(), av.cols(), data);
        self.min_kink_distance = kink;
        let rg = self.rg(&[a]);
        self.push(Op::LeakyRelu(a, slope), out, rg)
    }

    /// Softmax of a per-arc score column within groups sharing a segment id.
    pub fn segment_softmax(&mut self, scores: Var, segment: Arc<[usize]>) -> Var {
        let sv = self.value(scores);
        assert_eq!(sv.cols(), 1, "segment_softmax expects a column");
        assert_eq!(sv.rows(), segment.len(), "segment_softmax index length");
        let out = Tensor::column(segment_softmax(sv.data(), &segment));
        let rg = self.rg(&[scores]);
        self.push(Op::SegmentSoftmax(scores, segment), out, rg)
    }

    /// Multiplies row `r` of `a` by the scalar `scale[r]`.
    pub fn scale_rows(&mut self, a: Var, scale: Var) -> Var {
        let (av, sv) = (self.value(a), self.value(scale));
        assert_eq!(sv.shape(), [av.rows(), 1], "scale_rows expects a column per row");
        let mut out = av.clone();
        for r in 0..out.rows() {
            let s = sv.data()[r];
            for o in out.row_mut(r) {
                *o *= s;
            }
        }
        let rg = self.rg(&[a, scale]);
        self.push(Op::ScaleRows(a, scale), out, rg)
    }

    /// Sums rows of `a` into `num_segments` output rows by `segment[r]`.
    pub fn segment_sum(&mut self, a: Var, segment: Arc<[usize]>, num_segments: usize) -> Var {
        let av = self.value(a);
        assert_eq!(av.rows(), segment.len(), "segment_sum index length");
        let mut out = Tensor::zeros(num_segments, av.cols());
        for (r, &s) in segment.iter().enumerate() {
            for (o, v) in out.row_mut(s).iter_mut().zip(av.row(r)) {
                *o += v;
            }
        }
        let rg = self.rg(&[a]);
        self.push(Op::SegmentSum(a, segment), out, rg)
    }

    /// Mean of the rows of `a` in each segment. Empty segments yield zeros.
    pub fn segment_mean(&mut self, a: Var, segment: Arc<[usize]>, num_segments: usize) -> Var {
        let av = self.value(a);
        assert_eq!(av.rows(), segment.len(), "segment_mean index length");
        let mut counts = vec![0.0; num_segments];
        for &s in segment.iter() {
            counts[s] += 1.0;
        }
        let mut out = Tensor::zeros(num_segments, av.cols());
        for (r, &s) in segment.iter().enumerate() {
            for (o, v) in out.row_mut(s).iter_mut().zip(av.row(r)) {
                *o += v;
            }
        }
        for (s, &c) in counts.iter().enumerate() {
            if c > 0.0 {
                for o in out.row_mut(s) {
                    *o /= c;
                }
            }
        }
        let rg = self.rg(&[a]);
        self.push(Op::SegmentMean(a, segment, counts), out, rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let mut out = av.clone();
        for r in 0..out.rows() {
            softmax_in_place(out.row_mut(r));
        }
        let rg = self.rg(&[a]);
        self.push(Op::SoftmaxRows(a), out, rg)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let mut out = av.clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            for x in row.iter_mut() {
                *x = (*x - max) - lse;
            }
        }
        let rg = self.rg(&[a]);
        self.push(Op::LogSoftmaxRows(a), out, rg)
    }

    pub fn select_col(&mut self, a: Var, col: usize) -> Var {
        let av = self.value(a);
        assert!(col < av.cols(), "select_col out of range");
        let data = (0..av.rows()).map(|r| av.get(r, col)).collect();
        let out = Tensor::column(data);
        let rg = self.rg(&[a]);
        self.push(Op::SelectCol(a, col), out, rg)
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let data = av.data().iter().map(|x| 1.0 - x).collect();
        let out = Tensor::from_vec(av.rows(), av.cols(), data);
        let rg = self.rg(&[a]);
        self.push(Op::OneMinus(a), out, rg)
    }

    /// `out[r] = a[r, index[r]]` as a column.
    pub fn pick(&mut self, a: Var, index: Arc<[usize]>) -> Var {
        let av = self.value(a);
        assert_eq!(av.rows(), index.len(), "pick index length");
        let data = index
            .iter()
            .enumerate()
            .map(|(r, &c)| av.get(r, c))
            .collect();
        let out = Tensor::column(data);
        let rg = self.rg(&[a]);
        self.push(Op::Pick(a, index), out, rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).data().iter().sum());
        let rg = self.rg(&[a]);
        self.push(Op::Sum(a), out, rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let out = Tensor::scalar(av.data().iter().sum::<f64>() / av.len() as f64);
        let rg = self.rg(&[a]);
        self.push(Op::Mean(a), out, rg)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let av = self.value(a);
        let data = av.data().iter().map(|x| factor * x).collect();
        let out = Tensor::from_vec(av.rows(), av.cols(), data);
        let rg = self.rg(&[a]);
        self.push(Op::Scale(a, factor), out, rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let av = self.value(a);
        let data = av.data().iter().map(|x| x + c).collect();
        let out = Tensor::from_vec(av.rows(), av.cols(), data);
        let rg = self.rg(&[a]);
        self.push(Op::AddScalar(a), out, rg)
    }

    /// Reverse sweep from the scalar `root`. Returns one gradient slot per
    /// node; slots of nodes that do not require gradients stay `None`.
    pub fn backward(&self, root: Var) -> Result<Vec<Option<Tensor>>> {
        let rv = self.value(root);
        if rv.shape() != [1, 1] {
            return Err(Error::NonScalar {
                rows: rv.rows(),
                cols: rv.cols(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !g.is_finite() {
                return Err(Error::NonFinite {
                    op: node.op.name(),
                    phase: "backward",
                });
            }
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(grads)
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.requires_grad(*a) {
                    self.accumulate(grads, *a, matmul_nt(g, self.value(*b)));
                }
                if self.requires_grad(*b) {
                    self.accumulate(grads, *b, matmul_tn(self.value(*a), g));
                }
            }
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, g.clone());
                if self.requires_grad(*row) {
                    let mut gb = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    self.accumulate(grads, *row, gb);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.requires_grad(*a) {
                    self.accumulate(grads, *a, zip_map(g, bv, |x, y| x * y));
                }
                if self.requires_grad(*b) {
                    self.accumulate(grads, *b, zip_map(g, av, |x, y| x * y));
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.requires_grad(p) {
                        let mut gp = Tensor::zeros(g.rows(), w);
                        for r in 0..g.rows() {
                            gp.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + w]);
                        }
                        self.accumulate(grads, p, gp);
                    }
                    offset += w;
                }
            }
            Op::GatherRows(a, index) => {
                if self.requires_grad(*a) {
                    let av = self.value(*a);
                    let mut ga = Tensor::zeros(av.rows(), av.cols());
                    for (r, &i) in index.iter().enumerate() {
                        for (o, v) in ga.row_mut(i).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    self.accumulate(grads, *a, ga);
                }
            }
            Op::LeakyRelu(a, slope) => {
                let av = self.value(*a);
                let ga = zip_map(g, av, |gv, x| if x > 0.0 { gv } else { slope * gv });
                self.accumulate(grads, *a, ga);
            }
            Op::SegmentSoftmax(s, segment) => {
                let w = node.value.data();
                let gd = g.data();
                let num_segments = segment.iter().map(|&s| s + 1).max().unwrap_or(0);
                let mut dot = vec![0.0; num_segments];
                for (e, &s) in segment.iter().enumerate() {
                    dot[s] += w[e] * gd[e];
                }
                let data = segment
                    .iter()
                    .enumerate()
                    .map(|(e, &s)| w[e] * (gd[e] - dot[s]))
                    .collect();
                self.accumulate(grads, *s, Tensor::column(data));
            }
            Op::ScaleRows(a, scale) => {
                let (av, sv) = (self.value(*a), self.value(*scale));
                if self.requires_grad(*a) {
                    let mut ga = g.clone();
                    for r in 0..ga.rows() {
                        let s = sv.data()[r];
                        for o in ga.row_mut(r) {
                            *o *= s;
                        }
                    }
                    self.accumulate(grads, *a, ga);
                }
                if self.requires_grad(*scale) {
                    let data = (0..av.rows())
                        .map(|r| av.row(r).iter().zip(g.row(r)).map(|(x, y)| x * y).sum())
                        .collect();
                    self.accumulate(grads, *scale, Tensor::column(data));
                }
            }
            Op::SegmentSum(a, segment) => {
                let cols = g.cols();
                let mut ga = Tensor::zeros(segment.len(), cols);
                for (r, &s) in segment.iter().enumerate() {
                    ga.row_mut(r).copy_from_slice(g.row(s));
                }
                self.accumulate(grads, *a, ga);
            }
            Op::SegmentMean(a, segment, counts) => {
                let cols = g.cols();
                let mut ga = Tensor::zeros(segment.len(), cols);
                for (r, &s) in segment.iter().enumerate() {
                    let c = counts[s];
                    for (o, v) in ga.row_mut(r).iter_mut().zip(g.row(s)) {
                        *o = v / c;
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::SoftmaxRows(a) => {
                let p = &node.value;
                let mut ga = Tensor::zeros(p.rows(), p.cols());
                for r in 0..p.rows() {
                    let (pr, gr) = (p.row(r), g.row(r));
                    let dot: f64 = pr.iter().zip(gr).map(|(x, y)| x * y).sum();
                    for ((o, &pv), &gv) in ga.row_mut(r).iter_mut().zip(pr).zip(gr) {
                        *o = pv * (gv - dot);
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::LogSoftmaxRows(a) => {
                let y = &node.value;
                let mut ga = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let gsum: f64 = gr.iter().sum();
                    for ((o, &yv), &gv) in ga.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *o = gv - yv.exp() * gsum;
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::SelectCol(a, col) => {
                let av = self.value(*a);
                let mut ga = Tensor::zeros(av.rows(), av.cols());
                for r in 0..av.rows() {
                    ga.set(r, *col, g.data()[r]);
                }
                self.accumulate(grads, *a, ga);
            }
            Op::OneMinus(a) => {
                let ga = Tensor::from_vec(g.rows(), g.cols(), g.data().iter().map(|v| -v).collect());
                self.accumulate(grads, *a, ga);
            }
            Op::Pick(a, index) => {
                let av = self.value(*a);
                let mut ga = Tensor::zeros(av.rows(), av.cols());
                for (r, &c) in index.iter().enumerate() {
                    ga.set(r, c, g.data()[r]);
                }
                self.accumulate(grads, *a, ga);
            }
            Op::Sum(a) => {
                let av = self.value(*a);
                self.accumulate(grads, *a, Tensor::filled(av.rows(), av.cols(), g.item()));
            }
            Op::Mean(a) => {
                let av = self.value(*a);
                let v = g.item() / av.len() as f64;
                self.accumulate(grads, *a, Tensor::filled(av.rows(), av.cols(), v));
            }
            Op::Scale(a, factor) => {
                let ga = Tensor::from_vec(
                    g.rows(),
                    g.cols(),
                    g.data().iter().map(|v| factor * v).collect(),
                );
                self.accumulate(grads, *a, ga);
            }
            Op::AddScalar(a) => self.accumulate(grads, *a, g.clone()),
        }
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data)
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}

/// Softmax over groups of scores that share a segment id, with the
/// per-segment maximum subtracted before exponentiation.
pub fn segment_softmax(scores: &[f64], segment: &[usize]) -> Vec<f64> {
    assert_eq!(scores.len(), segment.len());
    let num_segments = segment.iter().map(|&s| s + 1).max().unwrap_or(0);
    let mut max = vec![f64::NEG_INFINITY; num_segments];
    for (&x, &s) in scores.iter().zip(segment) {
        max[s] = max[s].max(x);
    }
    let mut out: Vec<f64> = scores
        .iter()
        .zip(segment)
        .map(|(&x, &s)| (x - max[s]).exp())
        .collect();
    let mut total = vec![0.0; num_segments];
    for (&w, &s) in out.iter().zip(segment) {
        total[s] += w;
    }
    for (w, &s) in out.iter_mut().zip(segment) {
        *w /= total[s];
    }
    out
}
