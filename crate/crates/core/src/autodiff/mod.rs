//! Reverse-mode automatic differentiation over per-example graphs.
//!
//! Every tree has its own topology, so a fresh [`Graph`] is recorded for
//! each example and discarded after its gradients are read out. Values are
//! `f64` throughout. Binary elementwise ops do not broadcast, except that a
//! single-entry operand is treated as a scalar.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{grad_check, grad_check_with_floor, FD_STEP};
pub use graph::{ElementwiseKind, Gradients, Graph, ScaleFactor, Var, PROB_CLAMP};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("invalid shape {0:?}")]
    BadShape(Vec<usize>),
    #[error("shape {shape:?} does not match data length {len}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("loss must be scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("{0}: no inputs")]
    EmptyInput(&'static str),
    #[error("binary elementwise op given one operand")]
    MissingOperand,
}
