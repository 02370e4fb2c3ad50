use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backward called on a non-scalar tensor of shape {0:?}")]
    NonScalarLoss((usize, usize)),

    #[error("backward already ran on this tape; build a new tape per step")]
    BackwardTwice,

    #[error("variable does not belong to this tape")]
    ForeignVariable,

    #[error("graph has no edges")]
    EmptyEdgeSet,

    #[error("class {class} has {count} nodes; splitting needs at least {needed}")]
    ClassTooSmall {
        class: usize,
        count: usize,
        needed: usize,
    },

    #[error("cannot add {requested} edges: only {available} non-edges remain")]
    NotEnoughNonEdges { requested: usize, available: usize },

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("empty mask: no nodes selected")]
    EmptyMask,

    #[error("non-finite loss at epoch {epoch}: {value}")]
    Diverged { epoch: usize, value: f64 },

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("unknown dataset format `{0}` (expected planetoid-text or webkb-text)")]
    UnknownFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_shape(
    op: &'static str,
    lhs: (usize, usize),
    rhs: (usize, usize),
) -> Result<()> {
    if lhs == rhs {
        Ok(())
    } else {
        Err(Error::Shape { op, lhs, rhs })
    }
}
