//! Crate-wide error type.
//!
//! Every fallible operation in the crate returns [`Result`]. The variants map
//! onto the process exit codes used by the CLI: config/contract problems,
//! data/format problems, and numerical failures are kept distinct.

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Operand shapes are incompatible for an operation.
    #[error("{op}: dimension mismatch: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// A caller violated an API precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A configuration value violates an invariant.
    #[error("invalid config: {0}")]
    Config(String),

    /// The evaluation protocol cannot be applied (e.g. empty windows).
    #[error("protocol error: {0}")]
    Protocol(String),

    /// A file does not conform to its on-disk format. `offset` is the byte
    /// offset at which the problem was detected.
    #[error("format error in {path} at offset {offset}: {detail}")]
    Format {
        path: String,
        offset: u64,
        detail: String,
    },

    /// Training failed (typically a non-finite loss).
    #[error("training failed at epoch {epoch}, step {step}: {detail}")]
    Training {
        epoch: usize,
        step: usize,
        detail: String,
    },

    /// A function under evaluation produced a non-finite value.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Dimension error naming both operand shapes.
    pub fn dims(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Dimension {
            op,
            detail: format!("{lhs:?} vs {rhs:?}"),
        }
    }

    /// Dimension error for a single malformed operand.
    pub fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
