use std::fmt;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    Shape {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("non-finite value produced by {0}")]
    NonFiniteValue(&'static str),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("{0}")]
    Load(LoadError),

    #[error("row {row}: {feature} = {value} outside interval [{lo}, {hi}]")]
    Range {
        row: usize,
        feature: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Failure while reading a cohort file. `row` is the 1-based line number in
/// the source file (the header is line 1) when the failure is row-specific.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadError {
    pub path: String,
    pub row: Option<usize>,
    pub message: String,
}

impl fmt::Display for LoadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.row {
            Some(row) => write!(f, "{}: row {}: {}", self.path, row, self.message),
            None => write!(f, "{}: {}", self.path, self.message),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(op: &'static str, left: impl fmt::Display, right: impl fmt::Display) -> Error {
    Error::Shape {
        op,
        left: left.to_string(),
        right: right.to_string(),
    }
}
