//! Experiment driver: TOML configs with built-in presets, multi-seed runs,
//! parameter sweeps, ablations and CSV reports.

pub mod commands;
pub mod config;
pub mod output;
pub mod runner;
pub mod stats;

pub use commands::{cmd_ablate, cmd_run, cmd_sweep};
pub use config::{ExperimentConfig, SweepSpec, Variant, PRESETS};
pub use runner::{run_experiment, RunResult, RunSpec};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Run(#[from] clove::Error),
}

impl CliError {
    /// Process exit code: 2 for bad input, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
