use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The steering matrix of the angle grid cannot be inverted reliably.
    #[error("degenerate beam design: condition estimate {condition:.3e} exceeds limit {limit:.1e}")]
    DegenerateDesign { condition: f64, limit: f64 },

    #[error("value out of range: {0}")]
    Range(String),

    /// The pairwise error of a hypothesis against itself is not defined by the
    /// Marcum-Q expression; it is exactly zero and must be skipped by callers.
    #[error("pairwise error requested for the self pair (rho = 1)")]
    SelfPair,

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
