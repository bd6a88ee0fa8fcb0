//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by environment, agent, training, and I/O operations.
#[derive(Debug, Error)]
pub enum Error {
    /// A sequence or environment specification failed validation.
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    /// An action violated the active codec profile bounds.
    #[error("action out of bounds: {0}")]
    ActionOutOfBounds(String),

    /// Vector/matrix dimensions do not line up.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A caller-supplied argument is invalid for the operation.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A NaN or infinity appeared where a finite value is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Configuration file or override could not be applied.
    #[error("config error: {0}")]
    Config(String),

    /// Checkpoint container is malformed or version-incompatible.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Search/enumeration budget would be exceeded.
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
