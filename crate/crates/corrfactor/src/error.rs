//! Error type shared by all solvers.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Input formally valid but outside the supported range.
    #[error("range error: {0}")]
    Range(String),
    /// An internal consistency check failed; indicates a bug, not bad input.
    #[error("internal consistency error: {0}")]
    Internal(String),
    /// Linear-algebra conditioning failure (e.g. every overlap direction discarded).
    #[error("conditioning error: {0}")]
    Conditioning(String),
    /// Root/eigenvalue bracketing failure.
    #[error("bracket error: {0}")]
    Bracket(String),
    /// An iterative procedure failed to converge.
    #[error("convergence error: {0}")]
    Convergence(String),
    /// Invalid configuration (CLI / config file).
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
