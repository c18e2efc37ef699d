//! Experiment harness around `t2star-core`: TOML configuration, sampling-rate
//! sweeps, scheme comparisons, tuning and file export.

pub mod config;
pub mod error;
pub mod experiment;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
pub use experiment::{compare_schemes, run_experiment, ExperimentSummary, JobRow, SchemeComparison};
