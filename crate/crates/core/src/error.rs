use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("parse error at line {line}, column {column} (offset {offset}): {message}")]
    Parse {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("evaluation failed at ({x}, {y}): {message}")]
    Eval { x: f64, y: f64, message: String },

    #[error("boundary node {node} at {coords:?}: {message}")]
    BoundaryNode {
        node: usize,
        coords: [f64; 2],
        message: String,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value during {0}")]
    NonFinite(String),

    #[error("csv: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] IoError),
}

/// `std::io::Error` wrapped so that [`Error`] stays `Clone + PartialEq`.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{kind:?}: {message}")]
pub struct IoError {
    pub kind: std::io::ErrorKind,
    pub message: String,
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(IoError {
            kind: e.kind(),
            message: e.to_string(),
        })
    }
}
