//! Error taxonomy for the triage toolkit.
//!
//! Every fallible operation in this crate returns [`TriageError`]. The
//! variants are grouped by origin: ingestion problems (`Parse`, `Schema`,
//! `Invariant`, `Io`), configuration problems (`Config`), and runtime
//! problems raised by the numerical pipeline (`NonpositiveResidual`,
//! `NumericalDivergence`, ...).

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, TriageError>;

#[derive(Debug, Error)]
pub enum TriageError {
    /// A record could not be parsed at all (malformed JSON or CSV row).
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A record parsed but is missing a required field.
    #[error("schema error at line {line}: missing or malformed field `{field}`")]
    Schema { line: usize, field: String },

    /// A record or dataset violates a structural invariant. `id` names the
    /// offending profile (or artifact) so the caller can find it.
    #[error("invariant violated for `{id}`: {message}")]
    Invariant { id: String, message: String },

    /// Underlying I/O failure (file missing, permission, short write, ...).
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A configuration value is out of its documented range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A residual used as an interval scale was zero or negative.
    #[error("nonpositive residual for profile `{profile_id}` marker {horizon_index}: {value}")]
    NonpositiveResidual {
        profile_id: String,
        horizon_index: usize,
        value: f64,
    },

    /// A sample has no matching prediction bundle.
    #[error("missing prediction bundle for profile `{0}`")]
    MissingPrediction(String),

    /// A quantile or distribution was requested over an empty score set.
    #[error("empty score set: {0}")]
    EmptyScores(String),

    /// Training produced a non-finite loss or parameter.
    #[error("numerical divergence during training at epoch {epoch}: {message}")]
    NumericalDivergence { epoch: usize, message: String },

    /// An input vector did not match the expected dimension.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A spread statistic was requested over fewer than two replicates.
    #[error("insufficient replicates for profile `{profile_id}` marker {horizon_index}: got {got}, need at least 2")]
    InsufficientReplicates {
        profile_id: String,
        horizon_index: usize,
        got: usize,
    },

    /// A correction budget exceeds the available query pool.
    #[error("budget {requested} exceeds query pool of size {pool}")]
    BudgetExceedsPool { requested: usize, pool: usize },

    /// A required artifact (residual column, dropout replicates,
    /// calibration file) is absent.
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
}

impl TriageError {
    /// Helper for wrapping `std::io::Error` with the path that failed.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        TriageError::Io {
            path: path.into(),
            source,
        }
    }

    /// Helper for invariant violations.
    pub fn invariant(id: impl Into<String>, message: impl Into<String>) -> Self {
        TriageError::Invariant {
            id: id.into(),
            message: message.into(),
        }
    }
}
