//! Reverse-mode automatic differentiation over dense 2-D tensors.
//!
//! A [`Tape`] records every operation applied to its variables. Variables are
//! cheap [`Var`] handles into the tape; values and gradients are read back
//! through the tape. A tape is meant to live for exactly one forward/backward
//! pass: calling [`Tape::backward`] a second time returns
//! [`Error::BackwardTwice`](crate::Error::BackwardTwice).
//!
//! Leaves are created either as constants (never receive a gradient) or as
//! parameters (gradient slot filled by `backward`). An operation's output
//! requires a gradient iff one of its inputs does, so purely constant
//! sub-graphs are never differentiated.

mod ops;
mod tape;

pub use ops::Reduction;
pub use tape::{Tape, Var};
