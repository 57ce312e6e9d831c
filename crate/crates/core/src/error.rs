use plo_nlp::{NlpError, Status};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("malformed case data: {0}")]
    Malformed(String),
    #[error("no slack bus")]
    MissingSlack,
    #[error("multiple slack buses ({0} and {1})")]
    MultipleSlack(u64, u64),
    #[error("line {0} has zero reactance")]
    ZeroReactance(usize),
    #[error("line {line} has zero impedance")]
    ZeroImpedance { line: usize },
    #[error("unknown bus {0}")]
    UnknownBus(u64),
    #[error("duplicate bus id {0}")]
    DuplicateBus(u64),
    #[error("line {0} connects bus {1} to itself")]
    SelfLoop(usize, u64),
    #[error("network is not connected ({0} components)")]
    Disconnected(usize),
    #[error("invalid data: {0}")]
    Invalid(String),
    #[error("invalid JSON network: {0}")]
    Json(#[from] serde_json::Error),
    #[error("solver error: {0}")]
    Solver(#[from] NlpError),
    #[error("optimization ended with status {status}: {context}")]
    NotSolved { status: Status, context: String },
}

impl CoreError {
    /// True when the error stems from case-file parsing or validation.
    pub fn is_parse_error(&self) -> bool {
        matches!(
            self,
            CoreError::Malformed(_)
                | CoreError::MissingSlack
                | CoreError::MultipleSlack(..)
                | CoreError::ZeroReactance(_)
                | CoreError::ZeroImpedance { .. }
                | CoreError::UnknownBus(_)
                | CoreError::DuplicateBus(_)
                | CoreError::SelfLoop(..)
                | CoreError::Disconnected(_)
                | CoreError::Json(_)
        )
    }
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
