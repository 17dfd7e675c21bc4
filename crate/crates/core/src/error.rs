use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter {value} outside domain [{lo}, {hi}]")]
    Domain { value: f64, lo: f64, hi: f64 },

    #[error("index {index} out of range (bound {bound})")]
    Index { index: usize, bound: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid knot vector: {0}")]
    Knots(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("empty groups for control indices {indices:?} under strict policy")]
    SingularAssembly { indices: Vec<usize> },

    #[error("non-finite value at iteration {iteration}")]
    NumericalFailure { iteration: usize },

    #[error("{size}x{size} system exceeds the dense limit {limit}; raise the limit or use fewer controls")]
    DenseLimit { size: usize, limit: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
