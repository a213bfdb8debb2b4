use thiserror::Error;

use crate::estimation::Key;
use crate::factors::FootId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("logarithm undefined: rotation angle {angle} rad is too close to pi")]
    LogDomain { angle: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("under-constrained system, unconstrained keys: {0:?}")]
    UnderConstrained(Vec<Key>),

    #[error("graph structure: {0}")]
    Structure(String),

    #[error("unknown foot id {0}")]
    UnknownFoot(FootId),

    #[error("out of order: {0}")]
    OutOfOrder(String),

    #[error("estimator is not initialized")]
    NotInitialized,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
