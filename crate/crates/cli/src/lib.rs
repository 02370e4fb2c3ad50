//! Experiment commands behind the `mmp` binary.

mod args;
mod commands;
mod output;

pub use args::*;
pub use commands::{parse_model, run, CliError};
pub use output::{plotdata, write_atomic};
