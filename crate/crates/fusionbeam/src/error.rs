//! Error type shared across the crate.

/// Errors reported by model construction, solvers, and experiment plumbing.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Matrix or vector dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Model data violates a requirement (non-Hermitian covariance, indefinite
    /// gram matrix, non-positive power budget, ...).
    #[error("invalid model: {0}")]
    Model(String),

    /// A numerical routine failed (factorization breakdown, bracket failure,
    /// loss of feasibility).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// An internal consistency check failed. Signals a bug in this crate, not
    /// a user error.
    #[error("internal consistency check failed: {0}")]
    Internal(String),

    /// An update schedule misses a block or names an out-of-range sensor.
    #[error("invalid schedule: {0}")]
    Schedule(String),

    /// Experiment configuration is malformed.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
