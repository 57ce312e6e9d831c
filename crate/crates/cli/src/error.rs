use std::path::PathBuf;

use plo_core::CoreError;
use plo_nlp::Status;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Case { path: PathBuf, source: CoreError },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("json output: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// Process exit code: 2 for an infeasible model, 3 for unreadable or
    /// malformed input, 4 for a solver failure, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Read { .. } => 3,
            CliError::Case { source, .. } | CliError::Core(source) => core_code(source),
            _ => 1,
        }
    }
}

fn core_code(e: &CoreError) -> i32 {
    match e {
        e if e.is_parse_error() => 3,
        CoreError::NotSolved {
            status: Status::Infeasible,
            ..
        } => 2,
        CoreError::NotSolved { .. } | CoreError::Solver(_) => 4,
        _ => 1,
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
