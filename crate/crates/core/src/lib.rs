//! Graph neural networks for semi-supervised node classification with
//! memory-based message passing (MMP).
//!
//! Under MMP every node carries two states: a hidden embedding `H` used for
//! classification and a memory cell `C` that is the only thing sent to
//! neighbours. After each aggregation a sigmoid gate on `[H ‖ M]` gives
//! per-node weights `α_h`, `α_m` for mixing the old embedding with the
//! message `M`, and `α_c` for storing `M` as the next memory. A cosine
//! penalty between `C` and `H` pushes the two apart.
//!
//! The crate is self-contained: a small reverse-mode autodiff tape
//! ([`autodiff`]), CSR sparse aggregation ([`sparse`]), GCN/GAT layers and
//! the MMP wrapper ([`layers`]), losses ([`losses`]), an Adam training loop
//! with early stopping ([`trainer`]) and a plain-text dataset format
//! ([`dataset`]).
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the
//! type aliases at the crate root fix it to `f64`, which is what the
//! experiments use.

// `!(x > 0.0)` style checks are there to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod losses;
pub mod scalar;
pub mod sparse;
pub mod synthetic;
pub mod tensor;
pub mod trainer;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = tensor::Matrix<f64>;
pub type CsrMatrix = sparse::CsrMatrix<f64>;
pub type Tape = autodiff::Tape<f64>;
pub type Graph = graph::Graph<f64>;
pub type NormalizedAdjacency = graph::NormalizedAdjacency<f64>;
pub type Model = layers::Model<f64>;
pub use layers::LayerState;
pub type DatasetBundle = dataset::DatasetBundle<f64>;

pub type Matrix32 = tensor::Matrix<f32>;
pub type Tape32 = autodiff::Tape<f32>;
pub type Graph32 = graph::Graph<f32>;

/// Deterministic generator used for every random draw in the crate.
pub type Rng = ChaCha8Rng;

/// Independent random streams derived from one seed, so that e.g. split
/// generation never shifts the draws used for weight initialisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RngStream {
    /// Weight initialisation, then dropout masks and dropped edges in epoch order.
    Training = 0,
    Splits = 1,
    Noise = 2,
    Synthetic = 3,
}

pub fn seeded_rng(seed: u64, stream: RngStream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
