//! Experiment runner behind the `capinn` binary: config parsing, per-seed
//! runs with on-disk artifacts, summaries and A/B comparison tables.

pub mod compare;
pub mod config;
pub mod run;

use std::path::PathBuf;

pub use compare::{compare_dirs, reduction, Comparison, ComparisonRow};
pub use config::{ExperimentConfig, NetworkConfig, SCHEMA_VERSION};
pub use run::{
    dump_samples, run_experiment, run_landscape, ExperimentOutcome, LandscapeOutcome, RunOptions,
    SeedSummary, Summary,
};

/// Exit status for a run that hit a divergence abort.
pub const EXIT_DIVERGED: i32 = 3;
/// Exit status for a config that failed to parse or validate.
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CRASH: i32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}:{line}:{col}: {msg}", path.display())]
    Config {
        path: PathBuf,
        line: usize,
        col: usize,
        msg: String,
    },
    #[error(transparent)]
    Core(#[from] capinn::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Core(capinn::Error::Config(_)) => EXIT_CONFIG,
            CliError::Core(capinn::Error::Divergence { .. }) => EXIT_DIVERGED,
            _ => EXIT_CRASH,
        }
    }
}
