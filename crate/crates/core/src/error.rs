use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum LrmaError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: rating {value} outside scale [{min}, {max}]")]
    Range {
        line: usize,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("line {line}: duplicate observation for ({row}, {col})")]
    Duplicate {
        line: usize,
        row: String,
        col: String,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("index ({row}, {col}) out of range for {n_rows}x{n_cols} matrix")]
    Index {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },

    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("anchor ({row}, {col}) has no observed entries with nonzero kernel weight")]
    EmptyNeighborhood { row: usize, col: usize },

    #[error("requested {requested} anchors but only {available} observed entries exist")]
    InsufficientEntries { requested: usize, available: usize },

    #[error("{rows}x{cols} exceeds the dense solver cap of {cap}x{cap}")]
    Size {
        rows: usize,
        cols: usize,
        cap: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LrmaError {
    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        LrmaError::Shape {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        LrmaError::InvalidArgument(msg.into())
    }

    /// Process exit code: 1 for bad data, 2 for bad configuration, 3 for
    /// numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            LrmaError::Parse { .. }
            | LrmaError::Range { .. }
            | LrmaError::Duplicate { .. }
            | LrmaError::EmptyInput(_)
            | LrmaError::Io(_) => 1,
            LrmaError::InvalidArgument(_)
            | LrmaError::InsufficientEntries { .. }
            | LrmaError::Size { .. }
            | LrmaError::Shape { .. }
            | LrmaError::Index { .. } => 2,
            LrmaError::Divergence { .. } | LrmaError::EmptyNeighborhood { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, LrmaError>;
