//! Graph convolutions, the memory-based message passing wrapper and the
//! baseline plug-ins, assembled into [`Model`].

mod dropedge;
mod gat;
mod gcn;
mod mmp;
mod model;

use serde::{Deserialize, Serialize};

pub use dropedge::drop_edges;
pub use gat::{AttentionPattern, GatLayer, HeadMerge};
pub use gcn::GcnLayer;
pub use mmp::{init_state, LayerState, MmpWrapper};
pub use model::{jk_combine, Conv, ForwardOutput, GraphOps, Model, ModelOptions};

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::tensor::Matrix;
use crate::{Rng, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvKind {
    Gcn,
    Gat,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wrapper {
    None,
    Mmp,
    Jk,
    DropEdge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub(crate) fn apply<T: Scalar>(self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Identity => Ok(x),
        }
    }
}

/// Index of a trainable matrix in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Owns every trainable matrix of a model, in creation order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    values: Vec<Matrix<T>>,
    names: Vec<String>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            values: Vec::new(),
            names: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix<T>) -> ParamId {
        self.values.push(value);
        self.names.push(name.into());
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Matrix<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix<T> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Matrix<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Matrix<T>] {
        &mut self.values
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }
}

/// One forward (and optionally backward) pass: a fresh tape, the model's
/// parameters bound onto it, the train/eval mode and the run's generator.
pub struct Session<'r, T> {
    pub tape: Tape<T>,
    bound: Vec<Var>,
    pub training: bool,
    pub rng: &'r mut Rng,
}

impl<'r, T: Scalar> Session<'r, T> {
    /// Binds parameters as gradient-tracking leaves in training mode and as
    /// constants otherwise.
    pub fn new(params: &ParamStore<T>, training: bool, rng: &'r mut Rng) -> Self {
        let mut tape = Tape::new();
        let bound = params
            .values()
            .iter()
            .map(|m| {
                if training {
                    tape.param(m.clone())
                } else {
                    tape.constant(m.clone())
                }
            })
            .collect();
        Self {
            tape,
            bound,
            training,
            rng,
        }
    }

    /// Binds every parameter as a gradient-tracking leaf, independent of mode.
    pub fn with_gradients(params: &ParamStore<T>, training: bool, rng: &'r mut Rng) -> Self {
        let mut tape = Tape::new();
        let bound = params.values().iter().map(|m| tape.param(m.clone())).collect();
        Self {
            tape,
            bound,
            training,
            rng,
        }
    }

    pub fn param(&self, id: ParamId) -> Var {
        self.bound[id.0]
    }

    pub fn dropout(&mut self, x: Var, p: f64) -> Result<Var> {
        let training = self.training;
        self.tape.dropout(x, p, training, self.rng)
    }

    /// Gradients of every parameter after `tape.backward`, zeros where a
    /// parameter did not influence the loss.
    pub fn param_grads(&self, params: &ParamStore<T>) -> Vec<Matrix<T>> {
        self.bound
            .iter()
            .zip(params.values())
            .map(|(&v, m)| {
                self.tape
                    .grad(v)
                    .cloned()
                    .unwrap_or_else(|| Matrix::zeros(m.rows(), m.cols()))
            })
            .collect()
    }
}

/// Affine map `x · W (+ b)`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<T: Scalar>(
        params: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        with_bias: bool,
        rng: &mut Rng,
    ) -> Self {
        let weight = params.add(format!("{name}.weight"), Matrix::glorot(in_dim, out_dim, rng));
        let bias = with_bias.then(|| params.add(format!("{name}.bias"), Matrix::zeros(1, out_dim)));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let y = sess.tape.matmul(x, sess.param(self.weight))?;
        match self.bias {
            Some(b) => sess.tape.add_row_vector(y, sess.param(b)),
            None => Ok(y),
        }
    }
}
