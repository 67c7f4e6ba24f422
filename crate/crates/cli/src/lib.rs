//! Configuration parsing and run plumbing behind the `effpot` binary.

pub mod config;
pub mod run;

pub use config::{ConfigError, ExperimentKind, LoadedConfig, Plan, RunConfig, SCHEMA_VERSION};
pub use run::{execute, run_file, status_of, write_artifacts, RunError, RunOptions, Status};
