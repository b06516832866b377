//! Experiment harness for `copr-core`: configuration, reproducible trial
//! scheduling and CSV/JSON outputs for the `copr` command-line tool.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

pub use config::{Algorithm, Command, ExperimentConfig};
pub use error::{CliError, CliResult};
