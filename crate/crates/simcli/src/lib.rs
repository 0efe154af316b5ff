//! Declarative experiment runner for sector-graph connectivity, localization
//! and channel sweeps. Configs are TOML files, results are CSV.

pub mod config;
pub mod runner;

pub use config::{validate, ConfigErrors, ExperimentConfig};
pub use runner::{run, RunError, RunOptions, RunSummary};
