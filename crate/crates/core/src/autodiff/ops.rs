use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Op, Tape, Var};
use crate::error::{check_shape, Error, Result};
use crate::sparse::CsrMatrix;
use crate::tensor::Matrix;
use crate::Scalar;

/// How per-node cross-entropy terms are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    /// Plain sum over the selected nodes.
    #[default]
    Sum,
    /// Sum divided by the number of selected nodes.
    Mean,
}

impl<T: Scalar> Tape<T> {
    fn unary(&mut self, x: Var, value: Matrix<T>, op: Op<T>) -> Var {
        let rg = self.requires_grad(x);
        self.push(value, rg, op)
    }

    fn binary(&mut self, a: Var, b: Var, value: Matrix<T>, op: Op<T>) -> Var {
        let rg = self.any_requires_grad(&[a, b]);
        self.push(value, rg, op)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.binary(a, b, value, Op::MatMul(a, b)))
    }

    /// Sparse-dense product with a constant sparse matrix.
    pub fn spmm(&mut self, adj: &Arc<CsrMatrix<T>>, x: Var) -> Result<Var> {
        self.check(x)?;
        let value = adj.spmm(self.value(x))?;
        Ok(self.unary(x, value, Op::SpMM(Arc::clone(adj), x)))
    }

    /// Weighted neighbour aggregation over a sparsity pattern, where the
    /// per-entry weights are themselves a differentiable `nnz × 1` tensor.
    pub fn edge_aggregate(&mut self, pattern: &Arc<CsrMatrix<T>>, weights: Var, x: Var) -> Result<Var> {
        self.check(weights)?;
        self.check(x)?;
        check_shape("edge_aggregate", self.shape(weights), (pattern.nnz(), 1))?;
        let value = pattern.spmm_with_values(self.value(weights).as_slice(), self.value(x))?;
        Ok(self.binary(
            weights,
            x,
            value,
            Op::EdgeAggregate {
                pattern: Arc::clone(pattern),
                weights,
                x,
            },
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        check_shape("add", self.shape(a), self.shape(b))?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.binary(a, b, value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        check_shape("sub", self.shape(a), self.shape(b))?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.binary(a, b, value, Op::Sub(a, b)))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        check_shape("mul", self.shape(a), self.shape(b))?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.binary(a, b, value, Op::Mul(a, b)))
    }

    /// Adds a `1 × d` row vector to every row of `x`.
    pub fn add_row_vector(&mut self, x: Var, bias: Var) -> Result<Var> {
        self.check(x)?;
        self.check(bias)?;
        let (n, d) = self.shape(x);
        check_shape("add_row_vector", self.shape(bias), (1, d))?;
        let mut value = self.value(x).clone();
        let b = self.value(bias).row(0).to_vec();
        for i in 0..n {
            for (v, &bj) in value.row_mut(i).iter_mut().zip(&b) {
                *v = *v + bj;
            }
        }
        Ok(self.binary(x, bias, value, Op::AddRowVector(x, bias)))
    }

    /// Multiplies row `i` of `x` by the scalar `s[i, 0]`.
    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var> {
        self.check(x)?;
        self.check(s)?;
        let (n, _) = self.shape(x);
        check_shape("scale_rows", self.shape(s), (n, 1))?;
        let mut value = self.value(x).clone();
        for i in 0..n {
            let f = self.value(s)[(i, 0)];
            value.row_mut(i).iter_mut().for_each(|v| *v = *v * f);
        }
        Ok(self.binary(x, s, value, Op::ScaleRows(x, s)))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        self.check(x)?;
        let value = self.value(x).scale(c);
        Ok(self.unary(x, value, Op::Scale(x, c)))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let value = self.value(x).map(|v| v.max(T::zero()));
        Ok(self.unary(x, value, Op::Relu(x)))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Result<Var> {
        self.check(x)?;
        let value = self
            .value(x)
            .map(|v| if v > T::zero() { v } else { v * slope });
        Ok(self.unary(x, value, Op::LeakyRelu(x, slope)))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let value = self.value(x).map(sigmoid);
        Ok(self.unary(x, value, Op::Sigmoid(x)))
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let value = self.value(x).map(|v| v.abs());
        Ok(self.unary(x, value, Op::Abs(x)))
    }

    /// Column-wise concatenation, in argument order.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat_cols of zero tensors".into()))?;
        let n = self.shape(first).0;
        let mut width = 0;
        for &p in parts {
            self.check(p)?;
            let shape = self.shape(p);
            if shape.0 != n {
                return Err(Error::Shape {
                    op: "concat_cols",
                    lhs: self.shape(first),
                    rhs: shape,
                });
            }
            width += shape.1;
        }
        let mut value = Matrix::zeros(n, width);
        for i in 0..n {
            let mut offset = 0;
            for &p in parts {
                let src = self.value(p).row(i);
                value.row_mut(i)[offset..offset + src.len()].copy_from_slice(src);
                offset += src.len();
            }
        }
        let rg = self.any_requires_grad(parts);
        Ok(self.push(value, rg, Op::ConcatCols(parts.to_vec())))
    }

    /// Columns `start..start + len` of `x`.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        self.check(x)?;
        let (n, d) = self.shape(x);
        if start + len > d {
            return Err(Error::InvalidArgument(format!(
                "column slice {start}..{} outside width {d}",
                start + len
            )));
        }
        let mut value = Matrix::zeros(n, len);
        for i in 0..n {
            value.row_mut(i).copy_from_slice(&self.value(x).row(i)[start..start + len]);
        }
        Ok(self.unary(x, value, Op::SliceCols(x, start)))
    }

    /// Row `k` of the output is row `index[k]` of `x`.
    pub fn gather_rows(&mut self, x: Var, index: &Arc<Vec<usize>>) -> Result<Var> {
        self.check(x)?;
        let (n, d) = self.shape(x);
        let mut value = Matrix::zeros(index.len(), d);
        for (k, &src) in index.iter().enumerate() {
            if src >= n {
                return Err(Error::InvalidArgument(format!("gather index {src} >= {n} rows")));
            }
            value.row_mut(k).copy_from_slice(self.value(x).row(src));
        }
        Ok(self.unary(x, value, Op::GatherRows(x, Arc::clone(index))))
    }

    /// Softmax of an `m × 1` column within the segments `offsets[s]..offsets[s+1]`.
    pub fn segment_softmax(&mut self, x: Var, offsets: &Arc<Vec<usize>>) -> Result<Var> {
        self.check(x)?;
        let (m, c) = self.shape(x);
        if c != 1 || offsets.last() != Some(&m) || offsets.first() != Some(&0) {
            return Err(Error::InvalidArgument("segment offsets do not cover input column".into()));
        }
        let xv = self.value(x);
        let mut value = Matrix::zeros(m, 1);
        for seg in offsets.windows(2) {
            if seg[0] == seg[1] {
                continue;
            }
            let max = (seg[0]..seg[1]).fold(T::neg_infinity(), |a, k| a.max(xv[(k, 0)]));
            let mut total = T::zero();
            for k in seg[0]..seg[1] {
                let e = (xv[(k, 0)] - max).exp();
                value[(k, 0)] = e;
                total = total + e;
            }
            for k in seg[0]..seg[1] {
                value[(k, 0)] = value[(k, 0)] / total;
            }
        }
        Ok(self.unary(x, value, Op::SegmentSoftmax(x, Arc::clone(offsets))))
    }

    /// Inverted dropout: kept entries are divided by `1 - p`. Identity when
    /// `training` is false (no node is recorded and the rng is not touched).
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, training: bool, rng: &mut R) -> Result<Var> {
        self.check(x)?;
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("dropout probability {p} not in [0, 1)")));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let (n, d) = self.shape(x);
        let keep = T::lit(1.0 / (1.0 - p));
        let mask_data = (0..n * d)
            .map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep })
            .collect();
        let mask = Matrix::from_vec(n, d, mask_data)?;
        let value = self.value(x).zip_map(&mask, |a, m| a * m);
        Ok(self.unary(x, value, Op::Dropout(x, mask)))
    }

    /// Cross-entropy of a row-wise softmax against integer labels, restricted
    /// to the nodes where `mask` is true. Row maxima are subtracted before
    /// exponentiation.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        labels: &[usize],
        mask: &[bool],
        reduction: Reduction,
    ) -> Result<Var> {
        self.check(logits)?;
        let (n, c) = self.shape(logits);
        if labels.len() != n || mask.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{} labels / {} mask entries for {n} rows",
                labels.len(),
                mask.len()
            )));
        }
        let nodes: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
        if nodes.is_empty() {
            return Err(Error::EmptyMask);
        }
        let z = self.value(logits);
        let mut probs = Matrix::zeros(n, c);
        let mut total = T::zero();
        for &i in &nodes {
            let y = labels[i];
            if y >= c {
                return Err(Error::LabelOutOfRange {
                    label: y,
                    num_classes: c,
                });
            }
            let row = z.row(i);
            let max = row.iter().fold(T::neg_infinity(), |a, &v| a.max(v));
            let mut denom = T::zero();
            for (p, &v) in probs.row_mut(i).iter_mut().zip(row) {
                *p = (v - max).exp();
                denom = denom + *p;
            }
            probs.row_mut(i).iter_mut().for_each(|p| *p = *p / denom);
            total = total + (denom.ln() - (row[y] - max));
        }
        let scale = match reduction {
            Reduction::Sum => T::one(),
            Reduction::Mean => T::one() / T::lit(nodes.len() as f64),
        };
        let value = Matrix::filled(1, 1, total * scale);
        Ok(self.unary(
            logits,
            value,
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                labels: Arc::new(labels.to_vec()),
                nodes,
                scale,
            },
        ))
    }

    /// Per-row cosine similarity, `n × 1`. Each norm in the denominator is
    /// clamped below by `eps`, so all-zero rows yield 0.
    pub fn cosine_similarity_rows(&mut self, a: Var, b: Var, eps: T) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        check_shape("cosine_similarity_rows", self.shape(a), self.shape(b))?;
        let (av, bv) = (self.value(a), self.value(b));
        let mut value = Matrix::zeros(av.rows(), 1);
        for i in 0..av.rows() {
            let (ar, br) = (av.row(i), bv.row(i));
            let dot = ar.iter().zip(br).fold(T::zero(), |s, (&x, &y)| s + x * y);
            let na = ar.iter().fold(T::zero(), |s, &v| s + v * v).sqrt().max(eps);
            let nb = br.iter().fold(T::zero(), |s, &v| s + v * v).sqrt().max(eps);
            value[(i, 0)] = dot / (na * nb);
        }
        Ok(self.binary(a, b, value, Op::CosineRows { a, b, eps }))
    }

    /// Sum of all entries, as a 1×1 tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let value = Matrix::filled(1, 1, self.value(x).sum());
        Ok(self.unary(x, value, Op::Sum(x)))
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}
