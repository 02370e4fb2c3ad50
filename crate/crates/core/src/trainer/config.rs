use serde::{Deserialize, Serialize};

use crate::autodiff::Reduction;
use crate::layers::{ConvKind, ModelOptions, Wrapper};

/// Quantity watched for early stopping and λ selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopMetric {
    /// Validation accuracy, higher is better.
    #[default]
    Accuracy,
    /// Validation cross-entropy (mean over nodes), lower is better.
    Loss,
}

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub conv: ConvKind,
    pub wrapper: Wrapper,
    pub num_layers: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement tolerated before stopping.
    pub patience: usize,
    pub lambda: f64,
    pub seed: u64,
    pub gat_heads: usize,
    pub dropedge_p: f64,
    pub include_layer0_decouple: bool,
    pub reduction: Reduction,
    pub stop_metric: StopMetric,
    pub bypass_memory: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            conv: ConvKind::Gcn,
            wrapper: Wrapper::None,
            num_layers: 2,
            hidden: 64,
            dropout: 0.5,
            lr: 0.05,
            weight_decay: 0.0005,
            max_epochs: 500,
            patience: 100,
            lambda: 0.0,
            seed: 0,
            gat_heads: 8,
            dropedge_p: 0.3,
            include_layer0_decouple: false,
            reduction: Reduction::Sum,
            stop_metric: StopMetric::Accuracy,
            bypass_memory: false,
        }
    }
}

/// The λ values searched on the validation set.
pub const LAMBDA_GRID: [f64; 7] = [0.0, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0];

impl ModelConfig {
    pub fn model_options(&self) -> ModelOptions {
        ModelOptions {
            conv: self.conv,
            wrapper: self.wrapper,
            num_layers: self.num_layers,
            hidden: self.hidden,
            dropout: self.dropout,
            gat_heads: self.gat_heads,
            bypass_memory: self.bypass_memory,
        }
    }

    /// Short model label such as `gcn`, `gcn+mmp`, `gat+jk` or `mlp`.
    pub fn label(&self) -> String {
        let conv = match self.conv {
            ConvKind::Gcn => "gcn",
            ConvKind::Gat => "gat",
            ConvKind::Mlp => return "mlp".into(),
        };
        match self.wrapper {
            Wrapper::None => conv.into(),
            Wrapper::Mmp => format!("{conv}+mmp"),
            Wrapper::Jk => format!("{conv}+jk"),
            Wrapper::DropEdge => format!("{conv}+dropedge"),
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let bad = |msg: String| Err(crate::Error::InvalidArgument(msg));
        if !(self.lr > 0.0) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("weight decay {} must be >= 0", self.weight_decay));
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} not in [0, 1)", self.dropout));
        }
        if !(0.0..1.0).contains(&self.dropedge_p) {
            return bad(format!("dropedge probability {} not in [0, 1)", self.dropedge_p));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda {} must be >= 0", self.lambda));
        }
        if self.hidden == 0 || self.num_layers == 0 {
            return bad("hidden width and layer count must be positive".into());
        }
        Ok(())
    }
}
