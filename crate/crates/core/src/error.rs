use thiserror::Error;

use crate::taskgraph::TaskId;

/// Errors raised by graph construction, configuration and verification kernels.
///
/// Adversarial misbehavior is never an error; it is modeled as protocol traffic.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("task graph is not acyclic (cycle through task {0})")]
    NotADag(TaskId),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("divergent quantity: {0}")]
    Divergent(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
