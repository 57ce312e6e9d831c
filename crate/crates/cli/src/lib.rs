//! Command implementations and the seeded experiment harness behind the
//! `plo` binary.

pub mod commands;
pub mod error;
pub mod experiment;
pub mod report;

pub use error::{CliError, Result};
pub use experiment::{run_seed, ExperimentConfig, Instance};
