use std::sync::Arc;

use super::{Activation, ParamId, ParamStore, Session};
use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::sparse::CsrMatrix;
use crate::tensor::Matrix;
use crate::{Rng, Scalar};

/// Neighbourhoods `N(i) ∪ {i}` laid out as a CSR pattern, plus the per-entry
/// target/source indices used to gather attention logits.
#[derive(Debug, Clone)]
pub struct AttentionPattern<T> {
    pub pattern: Arc<CsrMatrix<T>>,
    pub targets: Arc<Vec<usize>>,
    pub sources: Arc<Vec<usize>>,
    pub offsets: Arc<Vec<usize>>,
}

impl<T: Scalar> AttentionPattern<T> {
    pub fn new(g: &Graph<T>) -> Self {
        let n = g.num_nodes();
        let triplets = (0..n).flat_map(|i| {
            g.neighbors(i)
                .iter()
                .map(move |&j| (i, j, T::one()))
                .chain(std::iter::once((i, i, T::one())))
        });
        let pattern = CsrMatrix::from_triplets(n, n, triplets).expect("graph indices in range");
        let mut targets = Vec::with_capacity(pattern.nnz());
        for i in 0..n {
            targets.extend(std::iter::repeat_n(i, pattern.row_ptr()[i + 1] - pattern.row_ptr()[i]));
        }
        Self {
            targets: Arc::new(targets),
            sources: Arc::new(pattern.col_idx().to_vec()),
            offsets: Arc::new(pattern.row_ptr().to_vec()),
            pattern: Arc::new(pattern),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.pattern.rows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadMerge {
    /// Head outputs side by side; output width = heads × per-head width.
    Concat,
    /// Head outputs averaged; output width = per-head width.
    Mean,
}

#[derive(Debug, Clone, Copy)]
struct Head {
    weight: ParamId,
    att_target: ParamId,
    att_source: ParamId,
}

/// Multi-head graph attention:
/// `e_ij = LeakyReLU(a_tᵀ W x_i + a_sᵀ W x_j)`, softmax over `j ∈ N(i) ∪ {i}`,
/// `out_i = Σ_j α_ij W x_j`, heads merged, then bias and activation.
#[derive(Debug, Clone)]
pub struct GatLayer {
    heads: Vec<Head>,
    bias: ParamId,
    pub in_dim: usize,
    pub head_dim: usize,
    pub merge: HeadMerge,
    pub slope: f64,
    pub activation: Activation,
}

impl GatLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        params: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        head_dim: usize,
        num_heads: usize,
        merge: HeadMerge,
        activation: Activation,
        rng: &mut Rng,
    ) -> Self {
        let heads = (0..num_heads)
            .map(|h| Head {
                weight: params.add(format!("{name}.head{h}.weight"), Matrix::glorot(in_dim, head_dim, rng)),
                att_target: params.add(format!("{name}.head{h}.att_target"), Matrix::glorot(head_dim, 1, rng)),
                att_source: params.add(format!("{name}.head{h}.att_source"), Matrix::glorot(head_dim, 1, rng)),
            })
            .collect();
        let out_dim = match merge {
            HeadMerge::Concat => head_dim * num_heads,
            HeadMerge::Mean => head_dim,
        };
        let bias = params.add(format!("{name}.bias"), Matrix::zeros(1, out_dim));
        Self {
            heads,
            bias,
            in_dim,
            head_dim,
            merge,
            slope: 0.2,
            activation,
        }
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn out_dim(&self) -> usize {
        match self.merge {
            HeadMerge::Concat => self.head_dim * self.heads.len(),
            HeadMerge::Mean => self.head_dim,
        }
    }

    fn check_input<T: Scalar>(&self, sess: &Session<'_, T>, att: &AttentionPattern<T>, x: Var) -> Result<()> {
        let (n, d) = sess.tape.shape(x);
        if d != self.in_dim || n != att.num_nodes() {
            return Err(Error::Shape {
                op: "gat_forward",
                lhs: (att.num_nodes(), self.in_dim),
                rhs: (n, d),
            });
        }
        Ok(())
    }

    fn head_forward<T: Scalar>(
        &self,
        sess: &mut Session<'_, T>,
        att: &AttentionPattern<T>,
        x: Var,
        head: usize,
    ) -> Result<(Var, Var)> {
        let h = self.heads[head];
        let wx = sess.tape.matmul(x, sess.param(h.weight))?;
        let score_t = sess.tape.matmul(wx, sess.param(h.att_target))?;
        let score_s = sess.tape.matmul(wx, sess.param(h.att_source))?;
        let per_edge_t = sess.tape.gather_rows(score_t, &att.targets)?;
        let per_edge_s = sess.tape.gather_rows(score_s, &att.sources)?;
        let logits = sess.tape.add(per_edge_t, per_edge_s)?;
        let logits = sess.tape.leaky_relu(logits, T::lit(self.slope))?;
        let alpha = sess.tape.segment_softmax(logits, &att.offsets)?;
        let out = sess.tape.edge_aggregate(&att.pattern, alpha, wx)?;
        Ok((out, alpha))
    }

    /// Attention coefficients of one head, one per pattern entry (CSR order).
    pub fn attention<T: Scalar>(
        &self,
        sess: &mut Session<'_, T>,
        att: &AttentionPattern<T>,
        x: Var,
        head: usize,
    ) -> Result<Var> {
        self.check_input(sess, att, x)?;
        Ok(self.head_forward(sess, att, x, head)?.1)
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<'_, T>, att: &AttentionPattern<T>, x: Var) -> Result<Var> {
        self.check_input(sess, att, x)?;
        let mut outs = Vec::with_capacity(self.heads.len());
        for head in 0..self.heads.len() {
            outs.push(self.head_forward(sess, att, x, head)?.0);
        }
        let merged = match self.merge {
            HeadMerge::Concat => sess.tape.concat_cols(&outs)?,
            HeadMerge::Mean => {
                let mut acc = outs[0];
                for &o in &outs[1..] {
                    acc = sess.tape.add(acc, o)?;
                }
                sess.tape.scale(acc, T::lit(1.0 / outs.len() as f64))?
            }
        };
        let out = sess.tape.add_row_vector(merged, sess.param(self.bias))?;
        self.activation.apply(&mut sess.tape, out)
    }
}
