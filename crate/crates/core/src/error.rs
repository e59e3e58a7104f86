use thiserror::Error;

/// Errors produced by the precoding library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("numeric failure on a {rows}x{cols} matrix: {what}")]
    NumericFailure {
        rows: usize,
        cols: usize,
        what: &'static str,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("matrix is singular: all eigenvalues fall below {jitter:e}")]
    Singular { jitter: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("infeasible zero-forcing problem: {0}")]
    Infeasible(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
