//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    /// Malformed input file; `record` is the zero-based record index when known.
    #[error("parse error{}: {msg}", fmt_record(.record))]
    Parse { record: Option<usize>, msg: String },

    /// Structurally invalid data (graph invariants, mapping injectivity, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// Dimension or shape mismatch between tensors, matrices or graphs.
    #[error("shape error: {0}")]
    Shape(String),

    /// An instance exceeds a solver's size guard.
    #[error("size guard: {0}")]
    SizeGuard(String),

    /// An operation that needs ground-truth annotations was given a pair without them.
    #[error("missing ground truth: {0}")]
    MissingGroundTruth(String),

    /// The synthetic generator ran out of legal non-canceling edits.
    #[error("generation error: {0}")]
    Generation(String),

    /// A numeric quantity that must stay finite did not.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Invalid configuration or argument value.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn fmt_record(record: &Option<usize>) -> String {
    match record {
        Some(i) => format!(" at record {i}"),
        None => String::new(),
    }
}
