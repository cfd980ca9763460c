//! Reverse-mode automatic differentiation over a fixed operator set.
//!
//! A [`Tape`] owns every intermediate value of one forward pass. Operations
//! append a node and return a [`Var`] handle; [`Tape::backward`] walks the
//! nodes in reverse insertion order (which is a topological order, since a
//! node can only reference earlier nodes) and accumulates gradients.
//!
//! Index-driven operators (gather, scatter, element picks) take their index
//! lists as `Arc<[_]>` so the same edge lists can be shared across epochs.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::math;
use super::tensor::{gemm, Layout, Tensor};
use crate::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Constant sparse matrix in compressed-row form.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        for &(r, c, _) in &sorted {
            if r >= rows {
                return Err(Error::IndexOutOfBounds { op: "csr", index: r, len: rows });
            }
            if c >= cols {
                return Err(Error::IndexOutOfBounds { op: "csr", index: c, len: cols });
            }
        }
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            last = Some((r, c));
            indptr[r + 1] += 1;
            indices.push(c);
            values.push(v);
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Ok(Self { rows, cols, indptr, indices, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates `(col, value)` pairs of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn to_dense(&self) -> Tensor {
        let mut out = Tensor::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                out.set(r, c, out.get(r, c) + v);
            }
        }
        out
    }

    fn mul_dense(&self, x: &Tensor) -> Tensor {
        let k = x.cols();
        let mut out = Tensor::zeros(self.rows, k);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                let src = x.row(c);
                for (o, s) in out.row_mut(r).iter_mut().zip(src) {
                    *o += v * s;
                }
            }
        }
        out
    }

    fn mul_dense_transposed_into(&self, g: &Tensor, out: &mut Tensor) {
        for r in 0..self.rows {
            let grow = g.row(r);
            for (c, v) in self.row(r) {
                for (o, s) in out.row_mut(c).iter_mut().zip(grow) {
                    *o += v * s;
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    GatherRows(Var, Arc<[usize]>),
    ScatterSum(Var, Arc<[usize]>),
    ScatterMean(Var, Arc<[usize]>, Vec<f64>),
    GatherElements(Var, Arc<[(usize, usize)]>),
    SparseMatMul(Arc<Csr>, Var),
    RowSum(Var),
    Sum(Var),
    Mean(Var),
    Relu(Var),
    Sigmoid(Var),
    Log(Var),
    Clamp(Var, f64, f64),
    RowSoftmax(Var, f64),
    StraightThrough(Var),
    CrossEntropy(Var, Arc<[usize]>),
    Mse(Var, Var),
}

impl Op {
    fn any_input(&self, mut f: impl FnMut(Var) -> bool) -> bool {
        match self {
            Op::Leaf => false,
            Op::MatMul(a, b)
            | Op::MatMulT(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b)
            | Op::MulCol(a, b)
            | Op::Mse(a, b) => f(*a) || f(*b),
            Op::ConcatCols(vs) => vs.iter().any(|v| f(*v)),
            Op::Scale(a, _)
            | Op::SliceRows(a, _)
            | Op::GatherRows(a, _)
            | Op::ScatterSum(a, _)
            | Op::ScatterMean(a, _, _)
            | Op::GatherElements(a, _)
            | Op::SparseMatMul(_, a)
            | Op::RowSum(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Log(a)
            | Op::Clamp(a, _, _)
            | Op::RowSoftmax(a, _)
            | Op::StraightThrough(a)
            | Op::CrossEntropy(a, _) => f(*a),
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to the leaf `v`; `None` for
    /// intermediate nodes and for leaves that do not require gradients.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

/// Gradient tape for one forward/backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch { op, left: a.shape(), right: b.shape() }
}

fn check_indices(op: &'static str, idx: &[usize], len: usize) -> Result<()> {
    match idx.iter().find(|&&i| i >= len) {
        Some(&index) => Err(Error::IndexOutOfBounds { op, index, len }),
        None => Ok(()),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let nodes = &self.nodes;
        let requires_grad = op.any_input(|v| nodes[v.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b)).map_err(|_| mismatch("matmul", self.value(a), self.value(b)))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.cols() {
            return Err(mismatch("matmul_t", ta, tb));
        }
        let mut out = Tensor::zeros(ta.rows(), tb.rows());
        gemm(Layout::normal(ta), Layout::transposed(tb), &mut out, 0.0);
        Ok(self.push(out, Op::MatMulT(a, b)))
    }

    fn zip_same(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(op, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(ta.rows(), ta.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_same("add", a, b, |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_same("sub", a, b, |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_same("mul", a, b, |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    /// Adds a `1 × c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(row));
        if tb.shape() != [1, ta.cols()] {
            return Err(mismatch("add_row", ta, tb));
        }
        let mut out = ta.clone();
        let c = ta.cols();
        if c > 0 {
            for chunk in out.data_mut().chunks_mut(c) {
                for (o, b) in chunk.iter_mut().zip(tb.data()) {
                    *o += b;
                }
            }
        }
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    /// Multiplies row `r` of `a` by entry `r` of the `rows × 1` column.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(col));
        if tb.shape() != [ta.rows(), 1] {
            return Err(mismatch("mul_col", ta, tb));
        }
        let mut out = ta.clone();
        for r in 0..ta.rows() {
            let s = tb.data()[r];
            for o in out.row_mut(r) {
                *o *= s;
            }
        }
        Ok(self.push(out, Op::MulCol(a, col)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    /// Concatenation along the feature (column) axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(Error::InvalidParameter("concat_cols of nothing".into()))?;
        let rows = self.value(first).rows();
        let mut cols = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows {
                return Err(mismatch("concat_cols", self.value(first), t));
            }
            cols += t.cols();
        }
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            let dst = out.row_mut(r);
            for &p in parts {
                let src = self.nodes[p.0].value.row(r);
                dst[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// Rows `start..end` of `a`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        if start > end || end > t.rows() {
            return Err(Error::IndexOutOfBounds { op: "slice_rows", index: end, len: t.rows() });
        }
        let c = t.cols();
        let out = Tensor::from_vec(end - start, c, t.data()[start * c..end * c].to_vec())?;
        Ok(self.push(out, Op::SliceRows(a, start)))
    }

    /// Output row `k` is row `idx[k]` of `a`.
    pub fn gather_rows(&mut self, a: Var, idx: Arc<[usize]>) -> Result<Var> {
        let t = self.value(a);
        check_indices("gather_rows", &idx, t.rows())?;
        let c = t.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx.iter() {
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor::from_vec(idx.len(), c, data)?;
        Ok(self.push(out, Op::GatherRows(a, idx)))
    }

    fn scatter_check(&self, op: &'static str, a: Var, idx: &[usize], n_out: usize) -> Result<()> {
        let t = self.value(a);
        if idx.len() != t.rows() {
            return Err(Error::ShapeMismatch { op, left: t.shape(), right: [idx.len(), 1] });
        }
        check_indices(op, idx, n_out)
    }

    /// Row `r` of the output is the sum of the rows `k` of `a` with `idx[k] == r`.
    pub fn scatter_sum(&mut self, a: Var, idx: Arc<[usize]>, n_out: usize) -> Result<Var> {
        self.scatter_check("scatter_sum", a, &idx, n_out)?;
        let t = self.value(a);
        let mut out = Tensor::zeros(n_out, t.cols());
        for (k, &r) in idx.iter().enumerate() {
            for (o, s) in out.row_mut(r).iter_mut().zip(t.row(k)) {
                *o += s;
            }
        }
        Ok(self.push(out, Op::ScatterSum(a, idx)))
    }

    /// Mean over each target's index set; targets with no members get the
    /// zero vector.
    pub fn scatter_mean(&mut self, a: Var, idx: Arc<[usize]>, n_out: usize) -> Result<Var> {
        self.scatter_check("scatter_mean", a, &idx, n_out)?;
        let t = self.value(a);
        let mut counts = vec![0usize; n_out];
        for &r in idx.iter() {
            counts[r] += 1;
        }
        let inv: Vec<f64> = counts.iter().map(|&c| if c == 0 { 0.0 } else { 1.0 / c as f64 }).collect();
        let mut out = Tensor::zeros(n_out, t.cols());
        for (k, &r) in idx.iter().enumerate() {
            let w = inv[r];
            for (o, s) in out.row_mut(r).iter_mut().zip(t.row(k)) {
                *o += w * s;
            }
        }
        Ok(self.push(out, Op::ScatterMean(a, idx, inv)))
    }

    /// Picks `a[i][j]` for every pair, producing a `k × 1` column.
    pub fn gather_elements(&mut self, a: Var, pairs: Arc<[(usize, usize)]>) -> Result<Var> {
        let t = self.value(a);
        let mut data = Vec::with_capacity(pairs.len());
        for &(i, j) in pairs.iter() {
            if i >= t.rows() {
                return Err(Error::IndexOutOfBounds { op: "gather_elements", index: i, len: t.rows() });
            }
            if j >= t.cols() {
                return Err(Error::IndexOutOfBounds { op: "gather_elements", index: j, len: t.cols() });
            }
            data.push(t.get(i, j));
        }
        let out = Tensor::from_vec(pairs.len(), 1, data)?;
        Ok(self.push(out, Op::GatherElements(a, pairs)))
    }

    /// Constant sparse matrix times `a`.
    pub fn sparse_matmul(&mut self, s: Arc<Csr>, a: Var) -> Result<Var> {
        let t = self.value(a);
        if s.cols() != t.rows() {
            return Err(Error::ShapeMismatch { op: "sparse_matmul", left: [s.rows(), s.cols()], right: t.shape() });
        }
        let out = s.mul_dense(t);
        Ok(self.push(out, Op::SparseMatMul(s, a)))
    }

    /// Sum of each row, `rows × 1`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = (0..t.rows()).map(|r| t.row(r).iter().sum()).collect();
        let out = Tensor::from_vec(t.rows(), 1, data).expect("row count");
        self.push(out, Op::RowSum(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(Error::InvalidParameter("mean of an empty tensor".into()));
        }
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        Ok(self.push(Tensor::scalar(s), Op::Mean(a)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(v, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(math::sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).map(math::ln);
        self.push(v, Op::Log(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(v, Op::Clamp(a, lo, hi))
    }

    /// Row-wise `softmax(a / tau)`, computed with the row maximum subtracted.
    pub fn row_softmax(&mut self, a: Var, tau: f64) -> Result<Var> {
        if !(tau > 0.0) {
            return Err(Error::InvalidParameter(alloc::format!("softmax temperature must be positive, got {tau}")));
        }
        let t = self.value(a);
        let mut out = t.clone();
        if t.cols() > 0 {
            for row in out.data_mut().chunks_mut(t.cols()) {
                softmax_in_place(row, tau);
            }
        }
        Ok(self.push(out, Op::RowSoftmax(a, tau)))
    }

    /// Forward value is `hard`; the backward pass treats the node as the
    /// identity on `soft`.
    pub fn straight_through(&mut self, soft: Var, hard: Tensor) -> Result<Var> {
        let ts = self.value(soft);
        if ts.shape() != hard.shape() {
            return Err(mismatch("straight_through", ts, &hard));
        }
        Ok(self.push(hard, Op::StraightThrough(soft)))
    }

    /// Mean cross-entropy of row-wise logits against integer class targets.
    pub fn cross_entropy(&mut self, logits: Var, targets: Arc<[usize]>) -> Result<Var> {
        let t = self.value(logits);
        if targets.len() != t.rows() || t.rows() == 0 {
            return Err(Error::ShapeMismatch { op: "cross_entropy", left: t.shape(), right: [targets.len(), 1] });
        }
        check_indices("cross_entropy", &targets, t.cols())?;
        let mut total = 0.0;
        for (r, &cls) in targets.iter().enumerate() {
            let row = t.row(r);
            total += math::log_sum_exp(row) - row[cls];
        }
        let v = Tensor::scalar(total / t.rows() as f64);
        Ok(self.push(v, Op::CrossEntropy(logits, targets)))
    }

    /// Mean squared error.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (tp, tt) = (self.value(pred), self.value(target));
        if tp.shape() != tt.shape() || tp.is_empty() {
            return Err(mismatch("mse", tp, tt));
        }
        let s: f64 = tp.data().iter().zip(tt.data()).map(|(p, t)| (p - t) * (p - t)).sum();
        let v = Tensor::scalar(s / tp.len() as f64);
        Ok(self.push(v, Op::Mse(pred, target)))
    }

    /// Reverse pass from a scalar `loss`. Gradients of nodes reached several
    /// times are summed. Only leaves keep their gradient; trainable leaves the
    /// loss does not depend on get zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.shape() != [1, 1] {
            return Err(Error::NonScalarLoss(lt.shape()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let (lower, upper) = grads.split_at_mut(i);
            let Some(g) = upper[0].take() else { continue };
            self.backprop_node(node, &g, lower);
        }
        for (node, slot) in self.nodes.iter().zip(grads.iter_mut()) {
            if node.requires_grad && matches!(node.op, Op::Leaf) && slot.is_none() {
                *slot = Some(Tensor::zeros(node.value.rows(), node.value.cols()));
            }
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backprop_node(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    let slot = slot_for(grads, *a, val(*a));
                    gemm(Layout::normal(g), Layout::transposed(val(*b)), slot, 1.0);
                }
                if self.wants(*b) {
                    let slot = slot_for(grads, *b, val(*b));
                    gemm(Layout::transposed(val(*a)), Layout::normal(g), slot, 1.0);
                }
            }
            Op::MatMulT(a, b) => {
                if self.wants(*a) {
                    let slot = slot_for(grads, *a, val(*a));
                    gemm(Layout::normal(g), Layout::normal(val(*b)), slot, 1.0);
                }
                if self.wants(*b) {
                    let slot = slot_for(grads, *b, val(*b));
                    gemm(Layout::transposed(g), Layout::normal(val(*a)), slot, 1.0);
                }
            }
            Op::Add(a, b) => {
                pass_through(self, grads, *a, g);
                pass_through(self, grads, *b, g);
            }
            Op::Sub(a, b) => {
                pass_through(self, grads, *a, g);
                accumulate(self, grads, *b, |s| s.axpy(-1.0, g));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                accumulate(self, grads, *a, |s| zip3(s, g, tb, |o, g, y| *o += g * y));
                accumulate(self, grads, *b, |s| zip3(s, g, ta, |o, g, x| *o += g * x));
            }
            Op::AddRow(a, b) => {
                pass_through(self, grads, *a, g);
                accumulate(self, grads, *b, |s| {
                    for r in 0..g.rows() {
                        for (o, x) in s.data_mut().iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                });
            }
            Op::MulCol(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                accumulate(self, grads, *a, |s| {
                    for r in 0..g.rows() {
                        let w = tb.data()[r];
                        for (o, x) in s.row_mut(r).iter_mut().zip(g.row(r)) {
                            *o += w * x;
                        }
                    }
                });
                accumulate(self, grads, *b, |s| {
                    for r in 0..g.rows() {
                        let dot: f64 = g.row(r).iter().zip(ta.row(r)).map(|(x, y)| x * y).sum();
                        s.data_mut()[r] += dot;
                    }
                });
            }
            Op::Scale(a, k) => accumulate(self, grads, *a, |s| s.axpy(*k, g)),
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = val(p).cols();
                    accumulate(self, grads, p, |s| {
                        for r in 0..g.rows() {
                            for (o, x) in s.row_mut(r).iter_mut().zip(&g.row(r)[off..off + w]) {
                                *o += x;
                            }
                        }
                    });
                    off += w;
                }
            }
            Op::SliceRows(a, start) => {
                let c = g.cols();
                accumulate(self, grads, *a, |s| {
                    for (o, x) in s.data_mut()[start * c..(start + g.rows()) * c].iter_mut().zip(g.data()) {
                        *o += x;
                    }
                });
            }
            Op::GatherRows(a, idx) => accumulate(self, grads, *a, |s| {
                for (k, &i) in idx.iter().enumerate() {
                    for (o, x) in s.row_mut(i).iter_mut().zip(g.row(k)) {
                        *o += x;
                    }
                }
            }),
            Op::ScatterSum(a, idx) => accumulate(self, grads, *a, |s| {
                for (k, &r) in idx.iter().enumerate() {
                    for (o, x) in s.row_mut(k).iter_mut().zip(g.row(r)) {
                        *o += x;
                    }
                }
            }),
            Op::ScatterMean(a, idx, inv) => accumulate(self, grads, *a, |s| {
                for (k, &r) in idx.iter().enumerate() {
                    let w = inv[r];
                    for (o, x) in s.row_mut(k).iter_mut().zip(g.row(r)) {
                        *o += w * x;
                    }
                }
            }),
            Op::GatherElements(a, pairs) => accumulate(self, grads, *a, |s| {
                for (k, &(i, j)) in pairs.iter().enumerate() {
                    let cur = s.get(i, j);
                    s.set(i, j, cur + g.data()[k]);
                }
            }),
            Op::SparseMatMul(sp, a) => accumulate(self, grads, *a, |s| sp.mul_dense_transposed_into(g, s)),
            Op::RowSum(a) => accumulate(self, grads, *a, |s| {
                for r in 0..s.rows() {
                    let x = g.data()[r];
                    for o in s.row_mut(r) {
                        *o += x;
                    }
                }
            }),
            Op::Sum(a) => {
                let x = g.item();
                accumulate(self, grads, *a, |s| s.data_mut().iter_mut().for_each(|o| *o += x));
            }
            Op::Mean(a) => {
                let x = g.item() / val(*a).len() as f64;
                accumulate(self, grads, *a, |s| s.data_mut().iter_mut().for_each(|o| *o += x));
            }
            Op::Relu(a) => {
                let out = &node.value;
                accumulate(self, grads, *a, |s| zip3(s, g, out, |o, g, y| if *y > 0.0 { *o += g }));
            }
            Op::Sigmoid(a) => {
                let out = &node.value;
                accumulate(self, grads, *a, |s| zip3(s, g, out, |o, g, y| *o += g * y * (1.0 - y)));
            }
            Op::Log(a) => {
                let ta = val(*a);
                accumulate(self, grads, *a, |s| zip3(s, g, ta, |o, g, x| *o += g / x));
            }
            Op::Clamp(a, lo, hi) => {
                let ta = val(*a);
                accumulate(self, grads, *a, |s| {
                    zip3(s, g, ta, |o, g, x| {
                        if *x >= *lo && *x <= *hi {
                            *o += g
                        }
                    })
                });
            }
            Op::RowSoftmax(a, tau) => {
                let y = &node.value;
                let c = y.cols();
                accumulate(self, grads, *a, |s| {
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for k in 0..c {
                            if yr[k] != 0.0 {
                                s.row_mut(r)[k] += yr[k] * (gr[k] - dot) / tau;
                            }
                        }
                    }
                });
            }
            Op::StraightThrough(a) => pass_through(self, grads, *a, g),
            Op::CrossEntropy(a, targets) => {
                let logits = val(*a);
                let scale = g.item() / logits.rows() as f64;
                accumulate(self, grads, *a, |s| {
                    let mut probs = Vec::with_capacity(logits.cols());
                    for (r, &cls) in targets.iter().enumerate() {
                        probs.clear();
                        probs.extend_from_slice(logits.row(r));
                        softmax_in_place(&mut probs, 1.0);
                        probs[cls] -= 1.0;
                        for (o, p) in s.row_mut(r).iter_mut().zip(&probs) {
                            *o += scale * p;
                        }
                    }
                });
            }
            Op::Mse(p, t) => {
                let (tp, tt) = (val(*p), val(*t));
                let scale = 2.0 * g.item() / tp.len() as f64;
                accumulate(self, grads, *p, |s| zip3(s, tp, tt, |o, p, t| *o += scale * (p - t)));
                accumulate(self, grads, *t, |s| zip3(s, tp, tt, |o, p, t| *o -= scale * (p - t)));
            }
        }
    }
}

fn slot_for<'a>(grads: &'a mut [Option<Tensor>], v: Var, like: &Tensor) -> &'a mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(like.rows(), like.cols()))
}

fn accumulate(tape: &Tape, grads: &mut [Option<Tensor>], v: Var, f: impl FnOnce(&mut Tensor)) {
    if tape.wants(v) {
        f(slot_for(grads, v, tape.value(v)));
    }
}

/// Adds `g` unchanged, copying it when the slot is still empty.
fn pass_through(tape: &Tape, grads: &mut [Option<Tensor>], v: Var, g: &Tensor) {
    if tape.wants(v) {
        match &mut grads[v.0] {
            Some(s) => s.axpy(1.0, g),
            slot => *slot = Some(g.clone()),
        }
    }
}

fn zip3(out: &mut Tensor, a: &Tensor, b: &Tensor, f: impl Fn(&mut f64, &f64, &f64)) {
    for ((o, x), y) in out.data_mut().iter_mut().zip(a.data()).zip(b.data()) {
        f(o, x, y);
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64], tau: f64) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        // every entry excluded; leave an all-zero row
        row.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = math::exp((*x - max) / tau);
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}
