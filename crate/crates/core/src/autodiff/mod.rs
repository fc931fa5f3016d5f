//! Reverse-mode automatic differentiation over small dense tensors.
//!
//! A [`Graph`] is an eager tape: each op computes its value immediately and
//! appends a node carrying the backward rule. Gradients accumulate by
//! summation across fan-out. Values are checked for NaN/Inf after every op.

mod gradcheck;
mod graph;
pub mod suite;
mod tensor;

pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport, InputReport};
pub use graph::{Gradients, Graph, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("softmax over a fully masked group (index {group})")]
    FullyMasked { group: usize },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("{0}")]
    InvalidArgument(String),
}
