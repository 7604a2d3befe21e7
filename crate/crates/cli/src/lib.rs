//! Experiment runner: TOML run configs, seeded simulated or threaded runs,
//! line-delimited run logs, diagnostics and comparison tables.

pub mod commands;
pub mod config;
pub mod error;
pub mod runlog;

pub use error::{CliError, Result};
