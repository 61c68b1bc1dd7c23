use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library. Simulation code is otherwise infallible;
/// these cover malformed inputs, violated preconditions and IO.
#[derive(Debug, Error)]
pub enum Error {
    #[error("individual has non-finite coordinate {index}")]
    NonFiniteFeature { index: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("hypotheses {first} and {second} cannot be separated by the candidate pool")]
    UnseparablePair { first: usize, second: usize },

    #[error("hypothesis family is empty")]
    EmptyFamily,

    #[error("hypothesis family has no constant member")]
    MissingConstant,

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("label for slot {slot} is not observed")]
    MissingLabel { slot: usize },

    #[error("no resampling count for positively predicted slot {slot}")]
    MissingK { slot: usize },

    #[error("aggregation function is not monotone")]
    NotMonotone,

    #[error("auditing scheme at round {round} is not monotone")]
    NonMonotoneScheme { round: usize },

    #[error("aggregation arity {arity} does not match panel size {panel}")]
    ArityMismatch { arity: usize, panel: usize },

    #[error("approximation gap {gap} exceeds eps'/4 = {limit}")]
    PreconditionViolated { gap: f64, limit: f64 },

    #[error("parameter out of range: {0}")]
    InvalidRange(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("linear program: {0}")]
    Lp(String),

    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
