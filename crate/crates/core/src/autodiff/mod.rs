//! Reverse-mode automatic differentiation over dense row-major arrays.
//!
//! Only the operations the character transformer needs are provided. Shapes
//! never broadcast except for the row-wise bias of [`Tape::add_bias`].

mod adam;
pub mod kernels;
mod tape;
mod tensor;

use thiserror::Error;

pub use adam::{adam_step, AdamHyper, AdamState};
pub(crate) use tape::attention_forward;
pub use tape::{Tape, Var};
pub use tensor::{Scalar, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid shape {shape:?}")]
    InvalidShape { shape: Vec<usize> },
    #[error("shape {shape:?} does not hold {len} elements")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("rows have different lengths")]
    RaggedRows,
    #[error("{what} length {actual} does not match expected length {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("index {index} out of range 0..{bound}")]
    Index { index: usize, bound: usize },
    #[error("empty loss: every target is ignored")]
    EmptyLoss,
    #[error("variable is not recorded on this tape")]
    NotOnTape,
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
}
