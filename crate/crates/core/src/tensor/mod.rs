//! Dense-matrix reverse-mode differentiation.
//!
//! [`Matrix`] holds values, [`Tape`] records primitive applications on
//! [`Var`] handles, and [`Tape::backward`] returns gradients for every
//! trainable leaf reachable from a scalar loss. [`ParamStore`] keeps named
//! parameters between tapes.

mod gradcheck;
mod matrix;
mod params;
mod tape;

pub use gradcheck::{grad_check, grad_check_many, DEFAULT_STEP};
pub use matrix::Matrix;
pub use params::{Bindings, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var, LEAKY_SLOPE};

pub(crate) use tape::sigmoid;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("matrix shape must be at least 1x1, got {rows}x{cols}")]
    EmptyShape { rows: usize, cols: usize },
    #[error("{rows}x{cols} matrix needs {} values, got {len}", rows * cols)]
    DataLength { rows: usize, cols: usize, len: usize },
    #[error("{op}: domain error: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("backward needs a 1x1 loss, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
}

impl TensorError {
    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        TensorError::ShapeMismatch { op, left, right }
    }
}
