use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no observed values to fit")]
    EmptyInput,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("value {0} is outside the open interval (0, 1)")]
    OutOfRange(f64),
    #[error("correlation {rho} is not valid for a {dim}-dimensional uniform Gaussian copula")]
    InvalidRho { dim: usize, rho: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("need at least 2 rows to fit a copula, got {0}")]
    TooFewRows(usize),
    #[error("singular design matrix for node {0}")]
    SingularDesign(usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },
    #[error("column '{0}' has zero variance or fewer than 2 observed values")]
    DegenerateColumn(String),
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
