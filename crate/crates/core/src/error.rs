//! Error types and process exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    /// Malformed input document.
    #[error("parse error: {0}")]
    Parse(String),

    /// Instance failed validation; one line per violation.
    #[error("invalid instance:\n{}", .0.join("\n"))]
    Validation(Vec<String>),

    /// An internal invariant broke; indicates an engine bug.
    #[error("engine invariant violated: {0}")]
    Invariant(String),

    /// The least common denominator of the divisible allocation exceeded the
    /// configured cap.
    #[error("least common denominator {lambda} exceeds cap {cap}")]
    LambdaCap { lambda: String, cap: u64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl EngineError {
    pub fn invariant(msg: impl Into<String>) -> Self {
        EngineError::Invariant(msg.into())
    }

    pub fn parse(msg: impl Into<String>) -> Self {
        EngineError::Parse(msg.into())
    }

    /// Process exit code: 2 for input problems, 3 for internal invariant
    /// violations (exit code 1 is reserved for negative verdicts).
    pub fn exit_code(&self) -> i32 {
        match self {
            EngineError::Parse(_) | EngineError::Validation(_) | EngineError::Io(_) => 2,
            EngineError::Invariant(_) | EngineError::LambdaCap { .. } => 3,
        }
    }
}
