use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mmp_core::autodiff::Reduction;
use mmp_core::layers::{ConvKind, Wrapper};
use mmp_core::trainer::{ModelConfig, StopMetric};

#[derive(Debug, Parser)]
#[command(name = "mmp", version, about = "Node classification with memory-based message passing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train and evaluate one model over all splits; writes one CSV row per split.
    Classify(ClassifyArgs),
    /// Accuracy under random edge addition, one CSV row per (ratio, model).
    Noise(NoiseArgs),
    /// Mean accuracy of an MMP model for every λ of a grid.
    LambdaSweep(SweepArgs),
    /// Print the edge homophily ratio of a dataset.
    Homophily(HomophilyArgs),
    /// Convert a raw dataset directory into the canonical bundle format.
    Convert(ConvertArgs),
    /// Reshape a results/noise/lambda CSV into whitespace-separated columns.
    Plotdata(PlotdataArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Dataset name (a bundle directory under --data-dir) or a path to a bundle.
    #[arg(long)]
    pub dataset: String,
    #[arg(long, env = "MMP_DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,
    /// L1-normalise feature rows after loading.
    #[arg(long)]
    pub row_normalize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConvArg {
    Gcn,
    Gat,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WrapperArg {
    None,
    Mmp,
    Jk,
    Dropedge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReductionArg {
    Sum,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StopArg {
    Accuracy,
    Loss,
}

impl From<ConvArg> for ConvKind {
    fn from(c: ConvArg) -> Self {
        match c {
            ConvArg::Gcn => ConvKind::Gcn,
            ConvArg::Gat => ConvKind::Gat,
            ConvArg::Mlp => ConvKind::Mlp,
        }
    }
}

impl From<WrapperArg> for Wrapper {
    fn from(w: WrapperArg) -> Self {
        match w {
            WrapperArg::None => Wrapper::None,
            WrapperArg::Mmp => Wrapper::Mmp,
            WrapperArg::Jk => Wrapper::Jk,
            WrapperArg::Dropedge => Wrapper::DropEdge,
        }
    }
}

/// Training and evaluation settings shared by all experiment commands.
#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Base seed: splits use it directly, split k trains with seed + k.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub splits: usize,
    /// Epochs without validation improvement before stopping.
    #[arg(long, default_value_t = 100)]
    pub patience: usize,
    #[arg(long, default_value_t = 500)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.0005)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 8)]
    pub gat_heads: usize,
    /// Per-epoch edge drop probability for the dropedge wrapper.
    #[arg(long, default_value_t = 0.3)]
    pub dropedge_p: f64,
    /// Also penalise layer 0, where memory and hidden state coincide.
    #[arg(long)]
    pub include_layer0_decouple: bool,
    #[arg(long, value_enum, default_value_t = ReductionArg::Sum)]
    pub reduction: ReductionArg,
    /// Validation quantity used for early stopping and λ selection.
    #[arg(long, value_enum, default_value_t = StopArg::Accuracy)]
    pub stop_metric: StopArg,
    /// Smallest class size accepted when generating splits.
    #[arg(long, default_value_t = 1)]
    pub min_class_size: usize,
    /// Parallel training jobs (default: available cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl TrainArgs {
    pub fn config(&self, conv: ConvKind, wrapper: Wrapper) -> ModelConfig {
        ModelConfig {
            conv,
            wrapper,
            num_layers: self.layers,
            hidden: self.hidden,
            dropout: self.dropout,
            lr: self.lr,
            weight_decay: self.weight_decay,
            max_epochs: self.max_epochs,
            patience: self.patience,
            lambda: 0.0,
            seed: self.seed,
            gat_heads: self.gat_heads,
            dropedge_p: self.dropedge_p,
            include_layer0_decouple: self.include_layer0_decouple,
            reduction: match self.reduction {
                ReductionArg::Sum => Reduction::Sum,
                ReductionArg::Mean => Reduction::Mean,
            },
            stop_metric: match self.stop_metric {
                StopArg::Accuracy => StopMetric::Accuracy,
                StopArg::Loss => StopMetric::Loss,
            },
            bypass_memory: false,
        }
    }

    pub fn jobs(&self) -> usize {
        self.jobs
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = ConvArg::Gcn)]
    pub conv: ConvArg,
    #[arg(long, value_enum, default_value_t = WrapperArg::None)]
    pub wrapper: WrapperArg,
    /// Fixed λ for MMP models (skips validation selection).
    #[arg(long, conflicts_with = "lambda_grid")]
    pub lambda: Option<f64>,
    /// λ values searched on the validation set for MMP models.
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, default_value = "results.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct NoiseArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Models to compare, e.g. `gcn,gcn+mmp`; overrides --conv/--wrapper.
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    /// Added edges as a fraction of the original edge count.
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1,2,3,4,5")]
    pub ratios: Vec<f64>,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, default_value = "noise.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = ConvArg::Gcn)]
    pub conv: ConvArg,
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.4,0.6,0.8,1")]
    pub lambda_grid: Vec<f64>,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, default_value = "lambda.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct HomophilyArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    PlanetoidText,
    WebkbText,
}

#[derive(Debug, Clone, Args)]
pub struct ConvertArgs {
    #[arg(long, value_enum)]
    pub format: FormatArg,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PlotdataArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}
