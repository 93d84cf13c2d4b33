//! Command-line driver for the nematic flow solvers: run configuration,
//! pipeline dispatch and output files.

pub mod config;
pub mod output;
pub mod run;

pub use config::{apply_overrides, ConfigError, RunConfig};
pub use run::{dispatch, Command, RunSummary};
