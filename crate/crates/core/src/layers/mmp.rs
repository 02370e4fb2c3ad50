use super::model::{Conv, GraphOps};
use super::{Linear, ParamStore, Session};
use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::{Rng, Scalar};

/// Per-layer node states: hidden embedding `H` and, for MMP models, memory `C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerState {
    pub hidden: Var,
    pub memory: Option<Var>,
    /// `n × 3` gate matrix `[α_h, α_m, α_c]` that produced this state, if any.
    pub gates: Option<Var>,
}

impl LayerState {
    pub fn plain(hidden: Var) -> Self {
        Self {
            hidden,
            memory: None,
            gates: None,
        }
    }
}

/// Initial state `H⁰ = x · proj` (no activation) with memory `C⁰ = H⁰`.
pub fn init_state<T: Scalar>(sess: &mut Session<'_, T>, x: Var, proj: Var) -> Result<LayerState> {
    let h0 = sess.tape.matmul(x, proj)?;
    Ok(LayerState {
        hidden: h0,
        memory: Some(h0),
        gates: None,
    })
}

/// Wraps a graph convolution so that it propagates memory cells instead of
/// hidden embeddings, and mixes the result back in through three shared
/// per-node sigmoid gates.
#[derive(Debug, Clone)]
pub struct MmpWrapper {
    pub inner: Conv,
    pub gate: Linear,
}

impl MmpWrapper {
    /// Gate map `[H ‖ M] (n × 2d) → n × 3`; weights Glorot, bias zero, so
    /// every gate starts near 0.5.
    pub fn new<T: Scalar>(params: &mut ParamStore<T>, name: &str, inner: Conv, rng: &mut Rng) -> Self {
        let width = inner.out_dim();
        let gate = Linear::new(params, &format!("{name}.gate"), 2 * width, 3, true, rng);
        Self { inner, gate }
    }

    /// One memory-based message passing step:
    ///
    /// ```text
    /// M   = conv(dropout(C_prev))
    /// α   = sigmoid([H_prev ‖ M] · W_g + b_g)          (n × 3)
    /// H   = α_h ⊙ H_prev + α_m ⊙ M
    /// C   = α_c ⊙ M
    /// ```
    ///
    /// With `bypass_memory` the gates are skipped and `H = C = M`, which is
    /// exactly a plain convolution stack.
    pub fn forward<T: Scalar>(
        &self,
        sess: &mut Session<'_, T>,
        ops: &GraphOps<T>,
        state: LayerState,
        dropout: f64,
        bypass_memory: bool,
    ) -> Result<LayerState> {
        let memory = state
            .memory
            .ok_or_else(|| Error::InvalidArgument("MMP layer needs a memory state".into()))?;
        let (hs, cs) = (sess.tape.shape(state.hidden), sess.tape.shape(memory));
        if hs != cs {
            return Err(Error::Shape {
                op: "mmp_forward",
                lhs: hs,
                rhs: cs,
            });
        }
        let dropped = sess.dropout(memory, dropout)?;
        let message = self.inner.forward(sess, ops, dropped)?;
        if bypass_memory {
            return Ok(LayerState {
                hidden: message,
                memory: Some(message),
                gates: None,
            });
        }
        if sess.tape.shape(message) != hs {
            return Err(Error::Shape {
                op: "mmp_forward",
                lhs: hs,
                rhs: sess.tape.shape(message),
            });
        }

        let gate_in = sess.tape.concat_cols(&[state.hidden, message])?;
        let gate_pre = self.gate.forward(sess, gate_in)?;
        let gates = sess.tape.sigmoid(gate_pre)?;
        let alpha_h = sess.tape.slice_cols(gates, 0, 1)?;
        let alpha_m = sess.tape.slice_cols(gates, 1, 1)?;
        let alpha_c = sess.tape.slice_cols(gates, 2, 1)?;

        let kept = sess.tape.scale_rows(state.hidden, alpha_h)?;
        let absorbed = sess.tape.scale_rows(message, alpha_m)?;
        let hidden = sess.tape.add(kept, absorbed)?;
        let memory = sess.tape.scale_rows(message, alpha_c)?;
        Ok(LayerState {
            hidden,
            memory: Some(memory),
            gates: Some(gates),
        })
    }
}
