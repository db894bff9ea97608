//! Command-line harness for the `ml-locality` benchmarks and trace studies.
//!
//! Every subcommand writes a deterministic data file (`<name>.csv` or
//! `<name>.json`) and a `<name>.meta.json` file with wall-times.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::json;

pub mod commands;
pub mod config;
pub mod output;

pub use config::{Format, Overrides, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] ml_locality::Error),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("check failed: {0}")]
    Check(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(_) => "library",
            CliError::Config(_) => "config",
            CliError::Io(..) => "io",
            CliError::Json(_) => "json",
            CliError::Check(_) => "check",
        }
    }

    /// Single-line JSON object for standard error.
    pub fn to_json(&self) -> String {
        json!({ "error": { "kind": self.kind(), "message": self.to_string() } }).to_string()
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ml-locality",
    version,
    about = "Locality benchmarks for machine-learning kernels"
)]
pub struct Cli {
    /// Flat `key = value` run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Timed repetitions after one discarded warm-up run.
    #[arg(long, global = true, value_name = "N")]
    pub repeat: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Hyperparameter override, repeatable.
    #[arg(long = "set", short = 's', global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Loss curves of sliding-window SGD for several optimizers and windows.
    SwsgdBench,
    /// k-NN and Parzen-window classification, separately and jointly.
    JointInstanceBench,
    /// Naive versus fold-streamed cross-validation.
    CvBench,
    /// Reuse distances and cache simulation of generated access traces.
    Trace,
    /// Analytic gradients versus central finite differences.
    GradCheck,
    /// Writes a synthetic blob dataset.
    DataGen,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SwsgdBench => "swsgd-bench",
            Command::JointInstanceBench => "joint-instance-bench",
            Command::CvBench => "cv-bench",
            Command::Trace => "trace",
            Command::GradCheck => "grad-check",
            Command::DataGen => "data-gen",
        }
    }
}

impl Cli {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            config: self.config.clone(),
            seed: self.seed,
            out: self.out.clone(),
            repeat: self.repeat,
            format: self.format,
            set: self.set.clone(),
        }
    }
}

/// Runs a parsed command line, returning the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let cfg = RunConfig::resolve(cli.command.name(), &cli.overrides())?;
    commands::dispatch(cli.command, cfg)
}
