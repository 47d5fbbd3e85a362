use std::fmt;

use thiserror::Error;

/// Row/column pair used in error messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape(pub usize, pub usize);

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.0, self.1)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MokaError {
    #[error("{op}: incompatible shapes {lhs} and {rhs}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Shape,
        rhs: Shape,
    },

    #[error("{op}: expected length {expected}, got {got}")]
    LengthMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("pair {index}: {reason}")]
    PairShape { index: usize, reason: String },

    #[error("zero dimension in {0}")]
    ZeroDimension(&'static str),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("explicit materialization of {entries} entries exceeds cap of {cap}")]
    SizeCap { entries: usize, cap: usize },

    #[error("training diverged at step {step} (loss = {loss})")]
    Divergence { step: usize, loss: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, MokaError>;
