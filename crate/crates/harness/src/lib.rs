//! Experiment plumbing behind the `gca` binary.
//!
//! Each subcommand is a plain function from its argument struct to a
//! [`RunReport`], so the integration tests drive the same code as the CLI.

pub mod commands;
pub mod config;
pub mod gradcheck;
pub mod report;

pub use config::ExperimentConfig;
pub use report::RunReport;
