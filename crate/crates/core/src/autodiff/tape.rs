use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;
use crate::tensor::Matrix;
use crate::Scalar;

static NEXT_TAPE_ID: AtomicUsize = AtomicUsize::new(0);

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: usize,
    index: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }
}

pub(crate) enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    SpMM(Arc<CsrMatrix<T>>, Var),
    /// out_i = Σ_k w_k · x_{col(k)} over the stored entries k of row i.
    EdgeAggregate {
        pattern: Arc<CsrMatrix<T>>,
        weights: Var,
        x: Var,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRowVector(Var, Var),
    ScaleRows(Var, Var),
    Scale(Var, T),
    Relu(Var),
    LeakyRelu(Var, T),
    Sigmoid(Var),
    Abs(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Arc<Vec<usize>>),
    SegmentSoftmax(Var, Arc<Vec<usize>>),
    Dropout(Var, Matrix<T>),
    SoftmaxCrossEntropy {
        logits: Var,
        probs: Matrix<T>,
        labels: Arc<Vec<usize>>,
        nodes: Vec<usize>,
        scale: T,
    },
    CosineRows {
        a: Var,
        b: Var,
        eps: T,
    },
    Sum(Var),
}

struct Node<T> {
    value: Arc<Matrix<T>>,
    grad: Option<Matrix<T>>,
    requires_grad: bool,
    op: Op<T>,
}

/// Records operations for a single forward/backward pass.
pub struct Tape<T> {
    id: usize,
    nodes: Vec<Node<T>>,
    backward_done: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A leaf that never accumulates gradient.
    pub fn constant(&mut self, value: Matrix<T>) -> Var {
        self.push(value, false, Op::Leaf)
    }

    /// A constant leaf sharing an existing matrix (no copy).
    pub fn constant_shared(&mut self, value: Arc<Matrix<T>>) -> Var {
        self.push_shared(value, false, Op::Leaf)
    }

    /// A trainable leaf; `grad` is populated by [`Tape::backward`].
    pub fn param(&mut self, value: Matrix<T>) -> Var {
        self.push(value, true, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.node(v).value
    }

    pub fn grad(&self, v: Var) -> Option<&Matrix<T>> {
        self.node(v).grad.as_ref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.node(v).requires_grad
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.node(v).value.shape()
    }

    /// Scalar value of a 1×1 tensor.
    pub fn scalar(&self, v: Var) -> Result<T> {
        let m = self.value(v);
        if m.shape() != (1, 1) {
            return Err(Error::NonScalarLoss(m.shape()));
        }
        Ok(m[(0, 0)])
    }

    pub(crate) fn check(&self, v: Var) -> Result<()> {
        if v.tape == self.id && v.index < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::ForeignVariable)
        }
    }

    fn node(&self, v: Var) -> &Node<T> {
        assert_eq!(v.tape, self.id, "variable used with a different tape");
        &self.nodes[v.index]
    }

    pub(crate) fn push(&mut self, value: Matrix<T>, requires_grad: bool, op: Op<T>) -> Var {
        self.push_shared(Arc::new(value), requires_grad, op)
    }

    fn push_shared(&mut self, value: Arc<Matrix<T>>, requires_grad: bool, op: Op<T>) -> Var {
        let index = self.nodes.len();
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var {
            tape: self.id,
            index,
        }
    }

    pub(crate) fn any_requires_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|&v| self.nodes[v.index].requires_grad)
    }

    /// Back-propagates from a 1×1 `loss`, filling the gradient of every
    /// gradient-requiring variable reachable from it.
    ///
    /// Each recorded operation is visited once, in reverse recording order.
    /// Calling this twice on one tape is an error.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.check(loss)?;
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(Error::NonScalarLoss(shape));
        }
        self.backward_done = true;
        if !self.nodes[loss.index].requires_grad {
            return Ok(());
        }
        self.nodes[loss.index].grad = Some(Matrix::filled(1, 1, T::one()));

        for idx in (0..=loss.index).rev() {
            if !self.nodes[idx].requires_grad || matches!(self.nodes[idx].op, Op::Leaf) {
                continue;
            }
            let Some(grad) = self.nodes[idx].grad.take() else {
                continue;
            };
            let contributions = self.local_gradients(idx, &grad)?;
            self.nodes[idx].grad = Some(grad);
            for (var, g) in contributions {
                self.accumulate(var, g);
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, g: Matrix<T>) {
        let node = &mut self.nodes[v.index];
        if !node.requires_grad {
            return;
        }
        match &mut node.grad {
            Some(existing) => existing.add_assign(&g),
            None => node.grad = Some(g),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.index].requires_grad
    }

    /// Gradient contributions of node `idx` to its inputs, given the upstream
    /// gradient `g` of its output.
    fn local_gradients(&self, idx: usize, g: &Matrix<T>) -> Result<Vec<(Var, Matrix<T>)>> {
        let node = &self.nodes[idx];
        let out = &*node.value;
        let val = |v: Var| &*self.nodes[v.index].value;
        let mut grads = Vec::new();

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    grads.push((*a, g.matmul_nt(val(*b))?));
                }
                if self.wants(*b) {
                    grads.push((*b, val(*a).matmul_tn(g)?));
                }
            }
            Op::SpMM(adj, x) => {
                if self.wants(*x) {
                    grads.push((*x, adj.spmm_transposed_with_values(adj.values(), g)?));
                }
            }
            Op::EdgeAggregate {
                pattern,
                weights,
                x,
            } => {
                let w = val(*weights).as_slice();
                if self.wants(*x) {
                    grads.push((*x, pattern.spmm_transposed_with_values(w, g)?));
                }
                if self.wants(*weights) {
                    let xv = val(*x);
                    let mut gw = Matrix::zeros(pattern.nnz(), 1);
                    let (row_ptr, col_idx) = (pattern.row_ptr(), pattern.col_idx());
                    for i in 0..pattern.rows() {
                        let g_row = g.row(i);
                        for k in row_ptr[i]..row_ptr[i + 1] {
                            gw[(k, 0)] = g_row
                                .iter()
                                .zip(xv.row(col_idx[k]))
                                .fold(T::zero(), |s, (&a, &b)| s + a * b);
                        }
                    }
                    grads.push((*weights, gw));
                }
            }
            Op::Add(a, b) => {
                grads.push((*a, g.clone()));
                grads.push((*b, g.clone()));
            }
            Op::Sub(a, b) => {
                grads.push((*a, g.clone()));
                grads.push((*b, g.scale(-T::one())));
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    grads.push((*a, g.zip_map(val(*b), |x, y| x * y)));
                }
                if self.wants(*b) {
                    grads.push((*b, g.zip_map(val(*a), |x, y| x * y)));
                }
            }
            Op::AddRowVector(x, bias) => {
                grads.push((*x, g.clone()));
                if self.wants(*bias) {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (acc, &v) in gb.row_mut(0).iter_mut().zip(g.row(i)) {
                            *acc = *acc + v;
                        }
                    }
                    grads.push((*bias, gb));
                }
            }
            Op::ScaleRows(x, s) => {
                let sv = val(*s);
                if self.wants(*x) {
                    let mut gx = g.clone();
                    for i in 0..gx.rows() {
                        let f = sv[(i, 0)];
                        gx.row_mut(i).iter_mut().for_each(|v| *v = *v * f);
                    }
                    grads.push((*x, gx));
                }
                if self.wants(*s) {
                    let xv = val(*x);
                    let mut gs = Matrix::zeros(g.rows(), 1);
                    for i in 0..g.rows() {
                        gs[(i, 0)] = g
                            .row(i)
                            .iter()
                            .zip(xv.row(i))
                            .fold(T::zero(), |s, (&a, &b)| s + a * b);
                    }
                    grads.push((*s, gs));
                }
            }
            Op::Scale(x, c) => grads.push((*x, g.scale(*c))),
            Op::Relu(x) => {
                let xv = val(*x);
                grads.push((*x, g.zip_map(xv, |gi, xi| if xi > T::zero() { gi } else { T::zero() })));
            }
            Op::LeakyRelu(x, slope) => {
                let xv = val(*x);
                let slope = *slope;
                grads.push((*x, g.zip_map(xv, |gi, xi| if xi > T::zero() { gi } else { gi * slope })));
            }
            Op::Sigmoid(x) => {
                grads.push((*x, g.zip_map(out, |gi, s| gi * s * (T::one() - s))));
            }
            Op::Abs(x) => {
                let xv = val(*x);
                grads.push((
                    *x,
                    g.zip_map(xv, |gi, xi| {
                        if xi > T::zero() {
                            gi
                        } else if xi < T::zero() {
                            -gi
                        } else {
                            T::zero()
                        }
                    }),
                ));
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let width = val(p).cols();
                    if self.wants(p) {
                        let mut gp = Matrix::zeros(g.rows(), width);
                        for i in 0..g.rows() {
                            gp.row_mut(i).copy_from_slice(&g.row(i)[offset..offset + width]);
                        }
                        grads.push((p, gp));
                    }
                    offset += width;
                }
            }
            Op::SliceCols(x, start) => {
                let xv = val(*x);
                let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                for i in 0..g.rows() {
                    gx.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
                }
                grads.push((*x, gx));
            }
            Op::GatherRows(x, index) => {
                let xv = val(*x);
                let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                for (k, &src) in index.iter().enumerate() {
                    for (acc, &v) in gx.row_mut(src).iter_mut().zip(g.row(k)) {
                        *acc = *acc + v;
                    }
                }
                grads.push((*x, gx));
            }
            Op::SegmentSoftmax(x, offsets) => {
                let mut gx = Matrix::zeros(out.rows(), 1);
                for seg in offsets.windows(2) {
                    let dot = (seg[0]..seg[1]).fold(T::zero(), |s, k| s + out[(k, 0)] * g[(k, 0)]);
                    for k in seg[0]..seg[1] {
                        gx[(k, 0)] = out[(k, 0)] * (g[(k, 0)] - dot);
                    }
                }
                grads.push((*x, gx));
            }
            Op::Dropout(x, mask) => grads.push((*x, g.zip_map(mask, |a, m| a * m))),
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                labels,
                nodes,
                scale,
            } => {
                let upstream = g[(0, 0)] * *scale;
                let mut gl = Matrix::zeros(probs.rows(), probs.cols());
                for &i in nodes {
                    for (dst, &p) in gl.row_mut(i).iter_mut().zip(probs.row(i)) {
                        *dst = p * upstream;
                    }
                    gl[(i, labels[i])] = gl[(i, labels[i])] - upstream;
                }
                grads.push((*logits, gl));
            }
            Op::CosineRows { a, b, eps } => {
                let (av, bv) = (val(*a), val(*b));
                let mut ga = Matrix::zeros(av.rows(), av.cols());
                let mut gb = Matrix::zeros(av.rows(), av.cols());
                for i in 0..av.rows() {
                    let (ar, br) = (av.row(i), bv.row(i));
                    let norm_a = ar.iter().fold(T::zero(), |s, &v| s + v * v).sqrt();
                    let norm_b = br.iter().fold(T::zero(), |s, &v| s + v * v).sqrt();
                    let ca = norm_a.max(*eps);
                    let cb = norm_b.max(*eps);
                    let cos = out[(i, 0)];
                    let gi = g[(i, 0)];
                    // d cos / d a = b / (ca cb) - cos a / ca² (the second term only
                    // while the norm is above the clamp)
                    let ka = if norm_a > *eps { cos / (ca * ca) } else { T::zero() };
                    let kb = if norm_b > *eps { cos / (cb * cb) } else { T::zero() };
                    let inv = T::one() / (ca * cb);
                    for j in 0..ar.len() {
                        ga[(i, j)] = gi * (br[j] * inv - ar[j] * ka);
                        gb[(i, j)] = gi * (ar[j] * inv - br[j] * kb);
                    }
                }
                if self.wants(*a) {
                    grads.push((*a, ga));
                }
                if self.wants(*b) {
                    grads.push((*b, gb));
                }
            }
            Op::Sum(x) => {
                let xv = val(*x);
                grads.push((*x, Matrix::filled(xv.rows(), xv.cols(), g[(0, 0)])));
            }
        }
        Ok(grads)
    }
}
