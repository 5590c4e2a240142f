use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the belief engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("quantity `{label}` is not registered in the belief store")]
    UnregisteredQuantity { label: String },

    #[error("duplicate quantity label `{label}`")]
    DuplicateLabel { label: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("{what} is not positive semi-definite: min eigenvalue {min_eigenvalue:e}")]
    NotPsd { what: String, min_eigenvalue: f64 },

    #[error("insufficient data: need at least {required} observations, got {actual}")]
    InsufficientData { required: usize, actual: usize },

    #[error("non-finite value in observation row {row}")]
    NonFiniteData { row: usize },

    #[error("csv parse error at line {line}: {message}")]
    CsvParse { line: usize, message: String },

    #[error("specification invalid:\n  {}", violations.join("\n  "))]
    Validation { violations: Vec<String> },

    #[error("collection `{label}` has no observed values")]
    MissingObservations { label: String },

    #[error("no observed value for quantity `{label}`")]
    MissingValue { label: String },

    #[error("observed matrix {index} does not match its member's sparsity pattern")]
    ObservationPattern { index: usize },

    #[error("diagram model invalid: {0}")]
    Diagram(String),

    #[error("json parse error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wrap a list of violation messages, which callers are expected to
    /// report in full rather than stopping at the first.
    pub fn validation(violations: Vec<String>) -> Self {
        Error::Validation { violations }
    }
}
