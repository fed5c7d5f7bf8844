//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by geometry, kernel, regression and evaluation routines.
#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the mathematical domain of an operation
    /// (e.g. a nonpositive radius fed to a kernel that is singular at zero).
    #[error("domain error: {0}")]
    Domain(String),

    /// A hyperparameter value violates its constraint.
    #[error("invalid hyperparameter `{name}`: {reason}")]
    InvalidHyper { name: String, reason: String },

    /// A required parameter is absent from a hyperparameter map or search space.
    #[error("missing parameter `{0}`")]
    MissingParameter(String),

    /// Shapes of two inputs do not agree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A matrix required to be invertible is singular.
    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    /// A covariance matrix could not be factorized even after jitter escalation.
    #[error("factorization failed (final jitter {jitter:e}): {context}")]
    Factorization { context: String, jitter: f64 },

    /// A kernel evaluation failed while assembling a Gram matrix.
    #[error("kernel evaluation failed at entry ({i}, {j}): {source}")]
    GramEntry {
        i: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },

    /// A predictive variance came out nonpositive (or below the clamping floor).
    #[error("nonpositive variance at index {index}: {value}")]
    NonpositiveVariance { index: usize, value: f64 },

    /// Observed data carry no variance, so a normalized metric is undefined.
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// Not enough data points for the requested operation.
    #[error("too few points: got {got}, need at least {min}")]
    TooFewPoints { got: usize, min: usize },

    /// An empty or too-short signal was supplied.
    #[error("empty signal")]
    EmptySignal,

    /// A configuration value is invalid.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code class for CLI front ends: 2 for configuration or
    /// validation problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Factorization { .. }
            | Error::SingularMatrix(_)
            | Error::NonpositiveVariance { .. } => 3,
            Error::GramEntry { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
