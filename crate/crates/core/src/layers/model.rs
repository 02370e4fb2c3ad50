use serde::{Deserialize, Serialize};

use super::gat::{AttentionPattern, GatLayer, HeadMerge};
use super::gcn::GcnLayer;
use super::mmp::{init_state, LayerState, MmpWrapper};
use super::{Activation, ConvKind, Linear, ParamStore, Session, Wrapper};
use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::graph::{gcn_normalize, Graph, NormalizedAdjacency};
use crate::{Rng, Scalar};

/// Graph-derived operators a forward pass needs, built once per graph (or
/// once per epoch when edges are dropped).
#[derive(Debug, Clone)]
pub struct GraphOps<T> {
    pub adjacency: Option<NormalizedAdjacency<T>>,
    pub attention: Option<AttentionPattern<T>>,
}

impl<T: Scalar> GraphOps<T> {
    pub fn for_conv(g: &Graph<T>, conv: ConvKind) -> Self {
        match conv {
            ConvKind::Gcn => Self {
                adjacency: Some(gcn_normalize(g)),
                attention: None,
            },
            ConvKind::Gat => Self {
                adjacency: None,
                attention: Some(AttentionPattern::new(g)),
            },
            ConvKind::Mlp => Self {
                adjacency: None,
                attention: None,
            },
        }
    }
}

/// A graph convolution usable on its own or inside [`MmpWrapper`].
#[derive(Debug, Clone)]
pub enum Conv {
    Gcn(GcnLayer),
    Gat(GatLayer),
}

impl Conv {
    pub fn out_dim(&self) -> usize {
        match self {
            Conv::Gcn(l) => l.linear.out_dim,
            Conv::Gat(l) => l.out_dim(),
        }
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<'_, T>, ops: &GraphOps<T>, x: Var) -> Result<Var> {
        match self {
            Conv::Gcn(l) => {
                let adj = ops
                    .adjacency
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument("GCN layer needs a normalized adjacency".into()))?;
                l.forward(sess, adj, x)
            }
            Conv::Gat(l) => {
                let att = ops
                    .attention
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument("GAT layer needs an attention pattern".into()))?;
                l.forward(sess, att, x)
            }
        }
    }
}

/// Architecture hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOptions {
    pub conv: ConvKind,
    pub wrapper: Wrapper,
    pub num_layers: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub gat_heads: usize,
    /// Debug switch for MMP models: skip the gates and use `H = C = M` at
    /// every layer, reducing the model to its inner convolution stack.
    pub bypass_memory: bool,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            conv: ConvKind::Gcn,
            wrapper: Wrapper::None,
            num_layers: 2,
            hidden: 64,
            dropout: 0.5,
            gat_heads: 8,
            bypass_memory: false,
        }
    }
}

#[derive(Debug, Clone)]
enum Block {
    Plain(Conv),
    Mmp(MmpWrapper),
}

#[derive(Debug, Clone)]
enum Body {
    Mlp {
        hidden: Linear,
        out: Linear,
    },
    Graph {
        proj: Linear,
        blocks: Vec<Block>,
        head: Linear,
    },
}

/// Output of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Var,
    /// Layer states; index 0 is the initial projection, index `l` the output
    /// of graph layer `l`. Empty for the MLP.
    pub states: Vec<LayerState>,
}

/// A node classifier: input projection, `num_layers` graph layers (plain,
/// MMP-wrapped, JK or DropEdge variants) and a linear classifier head; or the
/// two-layer MLP baseline.
#[derive(Debug, Clone)]
pub struct Model<T> {
    options: ModelOptions,
    params: ParamStore<T>,
    body: Body,
    in_dim: usize,
    num_classes: usize,
}

impl<T: Scalar> Model<T> {
    /// Initialises parameters from `rng` in a fixed order: input projection,
    /// each graph layer, classifier head, then (for MMP) each layer's gate.
    /// Models that differ only in the wrapper therefore share the weights of
    /// their common layers when built from the same seed.
    pub fn new(options: ModelOptions, in_dim: usize, num_classes: usize, rng: &mut Rng) -> Result<Self> {
        if options.hidden == 0 || num_classes == 0 || in_dim == 0 {
            return Err(Error::InvalidArgument("model dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&options.dropout) {
            return Err(Error::InvalidArgument(format!("dropout {} not in [0, 1)", options.dropout)));
        }
        let mut params = ParamStore::new();
        let hidden = options.hidden;

        let body = if options.conv == ConvKind::Mlp {
            Body::Mlp {
                hidden: Linear::new(&mut params, "mlp.hidden", in_dim, hidden, true, rng),
                out: Linear::new(&mut params, "mlp.out", hidden, num_classes, true, rng),
            }
        } else {
            if options.num_layers == 0 {
                return Err(Error::InvalidArgument("graph models need at least one layer".into()));
            }
            let proj = Linear::new(&mut params, "proj", in_dim, hidden, false, rng);
            let mut convs = Vec::with_capacity(options.num_layers);
            for l in 0..options.num_layers {
                let name = format!("conv{l}");
                let conv = match options.conv {
                    ConvKind::Gcn => Conv::Gcn(GcnLayer::new(&mut params, &name, hidden, hidden, Activation::Relu, rng)),
                    ConvKind::Gat => {
                        let heads = options.gat_heads.max(1);
                        if !hidden.is_multiple_of(heads) {
                            return Err(Error::InvalidArgument(format!(
                                "hidden width {hidden} not divisible by {heads} attention heads"
                            )));
                        }
                        Conv::Gat(GatLayer::new(
                            &mut params,
                            &name,
                            hidden,
                            hidden / heads,
                            heads,
                            HeadMerge::Concat,
                            Activation::Relu,
                            rng,
                        ))
                    }
                    ConvKind::Mlp => unreachable!(),
                };
                convs.push(conv);
            }
            let head_in = match options.wrapper {
                Wrapper::Jk => hidden * options.num_layers,
                _ => hidden,
            };
            let head = Linear::new(&mut params, "head", head_in, num_classes, true, rng);
            let blocks = if options.wrapper == Wrapper::Mmp {
                convs
                    .into_iter()
                    .enumerate()
                    .map(|(l, c)| Block::Mmp(MmpWrapper::new(&mut params, &format!("mmp{l}"), c, rng)))
                    .collect()
            } else {
                convs.into_iter().map(Block::Plain).collect()
            };
            Body::Graph { proj, blocks, head }
        };
        Ok(Self {
            options,
            params,
            body,
            in_dim,
            num_classes,
        })
    }

    pub fn options(&self) -> &ModelOptions {
        &self.options
    }

    pub fn options_mut(&mut self) -> &mut ModelOptions {
        &mut self.options
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Copies every parameter whose name also exists in `other` (with equal shape).
    pub fn copy_shared_from(&mut self, other: &Model<T>) -> usize {
        let mut copied = 0;
        for id in self.params.ids().collect::<Vec<_>>() {
            let name = self.params.name(id).to_owned();
            if let Some(src) = other.params.find(&name) {
                if other.params.get(src).shape() == self.params.get(id).shape() {
                    *self.params.get_mut(id) = other.params.get(src).clone();
                    copied += 1;
                }
            }
        }
        copied
    }

    /// Runs the model on `features` (an `n × in_dim` tensor on the session's tape).
    pub fn forward(&self, sess: &mut Session<'_, T>, ops: &GraphOps<T>, features: Var) -> Result<ForwardOutput> {
        let (_, d) = sess.tape.shape(features);
        if d != self.in_dim {
            return Err(Error::Shape {
                op: "model_forward",
                lhs: (0, self.in_dim),
                rhs: sess.tape.shape(features),
            });
        }
        let p = self.options.dropout;
        match &self.body {
            Body::Mlp { hidden, out } => {
                let x = sess.dropout(features, p)?;
                let h = hidden.forward(sess, x)?;
                let h = sess.tape.relu(h)?;
                let h = sess.dropout(h, p)?;
                let logits = out.forward(sess, h)?;
                Ok(ForwardOutput {
                    logits,
                    states: Vec::new(),
                })
            }
            Body::Graph { proj, blocks, head } => {
                let x = sess.dropout(features, p)?;
                let is_mmp = self.options.wrapper == Wrapper::Mmp;
                let mut state = if is_mmp {
                    let w = sess.param(proj.weight);
                    init_state(sess, x, w)?
                } else {
                    LayerState::plain(proj.forward(sess, x)?)
                };
                let mut states = vec![state];
                for block in blocks {
                    state = match block {
                        Block::Plain(conv) => {
                            let h = sess.dropout(state.hidden, p)?;
                            LayerState::plain(conv.forward(sess, ops, h)?)
                        }
                        Block::Mmp(mmp) => mmp.forward(sess, ops, state, p, self.options.bypass_memory)?,
                    };
                    states.push(state);
                }
                let readout = if self.options.wrapper == Wrapper::Jk {
                    let outs: Vec<Var> = states[1..].iter().map(|s| s.hidden).collect();
                    jk_combine(sess, &outs)?
                } else {
                    state.hidden
                };
                let readout = sess.dropout(readout, p)?;
                let logits = head.forward(sess, readout)?;
                Ok(ForwardOutput { logits, states })
            }
        }
    }
}

/// Jumping-knowledge readout: column concatenation of the layer outputs, in
/// layer order.
pub fn jk_combine<T: Scalar>(sess: &mut Session<'_, T>, outputs: &[Var]) -> Result<Var> {
    let first = *outputs
        .first()
        .ok_or_else(|| Error::InvalidArgument("jk_combine needs at least one layer output".into()))?;
    let shape = sess.tape.shape(first);
    for &o in &outputs[1..] {
        if sess.tape.shape(o) != shape {
            return Err(Error::Shape {
                op: "jk_combine",
                lhs: shape,
                rhs: sess.tape.shape(o),
            });
        }
    }
    if outputs.len() == 1 {
        return Ok(first);
    }
    sess.tape.concat_cols(outputs)
}
