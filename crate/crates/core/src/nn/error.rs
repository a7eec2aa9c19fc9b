use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("mask does not fit the score matrix or masks an entire row")]
    BadMask,
    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("target of length {target_len} needs at least {required} frames, got {frames}")]
    TargetTooLong {
        target_len: usize,
        required: usize,
        frames: usize,
    },
    #[error("parameter {0} not found")]
    UnknownParameter(String),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;
