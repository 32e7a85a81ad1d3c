//! Crate-wide error type.

use thiserror::Error;

/// Unified error type for all pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input file content.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A graph ended up with no nodes after filtering.
    #[error("empty graph: {0}")]
    EmptyGraph(String),

    /// A dataset ended up with no rows or columns after filtering.
    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    /// Tensor/matrix dimensions do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// A forward pass produced a non-finite value.
    #[error("numeric error in `{op}`: {message}")]
    Numeric { op: String, message: String },

    /// Misuse of an autodiff tape (reuse, foreign node id).
    #[error("tape error: {0}")]
    Tape(String),

    /// A documented precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Level or supernode index outside the hierarchy.
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// Coarsening collapsed to a single node with levels still requested.
    #[error(
        "graph coarsened to a single node at level {reached} of {requested}; \
         no further levels are possible"
    )]
    LevelExhaustion { reached: usize, requested: usize },

    /// A class has too few samples to split across three partitions.
    #[error("stratification error: class `{class}` has {count} samples, need at least 3")]
    Stratification { class: String, count: usize },

    /// A label index or label file entry is invalid.
    #[error("label error: {0}")]
    InvalidLabel(String),

    /// Dataset/graph identifier reconciliation failed.
    #[error("alignment error: {0}")]
    Alignment(String),

    /// A value fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A synthetic data specification cannot be satisfied.
    #[error("infeasible spec: {0}")]
    InfeasibleSpec(String),

    /// A config or checkpoint document violates its schema.
    #[error("schema violation: {0}")]
    Schema(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether this error stems from user input (files, config, preconditions)
    /// rather than an internal or numeric failure. CLI maps user errors to
    /// exit code 1 and the rest to exit code 2.
    pub fn is_user_error(&self) -> bool {
        !matches!(
            self,
            Error::Shape(_) | Error::Numeric { .. } | Error::Tape(_) | Error::Contract(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
