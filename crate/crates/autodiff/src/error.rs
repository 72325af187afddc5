use thiserror::Error;

pub type Result<T> = std::result::Result<T, AutodiffError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch, expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("{op}: {detail}")]
    InvalidShape { op: &'static str, detail: String },
    #[error("tensor has {values} values but shape {shape:?} needs {expected}")]
    BadLength {
        shape: Vec<usize>,
        values: usize,
        expected: usize,
    },
    #[error("non-finite gradient in parameter {index}")]
    NonFiniteGradient { index: usize },
    #[error("backward requires a scalar output, node has shape {0:?}")]
    NonScalarOutput(Vec<usize>),
    #[error("parameter/state mismatch: {0}")]
    StateMismatch(String),
}
