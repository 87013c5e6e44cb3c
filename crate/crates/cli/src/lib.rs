//! Reproducible experiment runner over `mtpp-core`: synthesize data, train
//! a configuration, evaluate a run, summarize its gradient conflicts and
//! compare two configurations.

pub mod commands;
pub mod config;
pub mod error;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
