use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("no samples")]
    NoSamples,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid budget plan: {0}")]
    InvalidPlan(String),

    #[error("unknown acquisition function `{0}`")]
    UnknownStrategy(String),

    #[error("target imbalance ratio {target} is unattainable: {reason}")]
    UnattainableImbalance { target: f64, reason: String },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("training data contains a single class")]
    SingleClass,

    #[error("class {class} has {count} sample(s), at least 2 are required")]
    InsufficientClassSamples { class: usize, count: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("batch of {batch} exceeds pool of {pool}")]
    BatchTooLarge { batch: usize, pool: usize },

    #[error("sample {0} has no score from the previous iteration")]
    MissingPrevious(usize),

    #[error("sample {0} has no pseudo class")]
    MissingPseudoClass(usize),

    #[error("unknown sample id {0}")]
    UnknownSample(usize),

    #[error("coreset selection needs at least one labeled sample")]
    EmptyLabeledSet,

    #[error("initial batch covered fewer than 2 classes after {0} attempts")]
    DegenerateInitialBatch(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by bad user input rather than a failure while running.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::InvalidPlan(_)
                | Error::UnknownStrategy(_)
                | Error::UnattainableImbalance { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
