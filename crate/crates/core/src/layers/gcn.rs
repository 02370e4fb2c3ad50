use super::{Activation, Linear, ParamStore, Session};
use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::{Rng, Scalar};

/// `σ(Â · x · W + b)`.
///
/// With self-loops folded into `Â`, the separate self and neighbour terms
/// `W h_i + W m_i` collapse into this single propagation.
#[derive(Debug, Clone, Copy)]
pub struct GcnLayer {
    pub linear: Linear,
    pub activation: Activation,
}

impl GcnLayer {
    pub fn new<T: Scalar>(
        params: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut Rng,
    ) -> Self {
        Self {
            linear: Linear::new(params, name, in_dim, out_dim, true, rng),
            activation,
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        sess: &mut Session<'_, T>,
        adj: &NormalizedAdjacency<T>,
        x: Var,
    ) -> Result<Var> {
        let (n, d) = sess.tape.shape(x);
        if d != self.linear.in_dim || adj.matrix().cols() != n {
            return Err(Error::Shape {
                op: "gcn_forward",
                lhs: adj.matrix().shape(),
                rhs: (n, d),
            });
        }
        let xw = sess.tape.matmul(x, sess.param(self.linear.weight))?;
        let agg = sess.tape.spmm(adj.matrix(), xw)?;
        let out = match self.linear.bias {
            Some(b) => sess.tape.add_row_vector(agg, sess.param(b))?,
            None => agg,
        };
        self.activation.apply(&mut sess.tape, out)
    }
}
