//! Dense `f64` tensors and a define-by-run reverse-mode tape.
//!
//! Only the operations the recurrent cells need are provided: matrix
//! products, elementwise arithmetic, the two gate nonlinearities, column
//! concatenation, time slicing/stacking, and a fused softmax cross-entropy.

mod tape;
mod tensor;

pub use tape::{Tape, Var};
pub use tensor::{sigmoid, softmax_rows, Tensor, MAX_RANK};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("shape {0:?} is invalid (rank 1..=3, all extents positive)")]
    BadShape(Vec<usize>),
    #[error("shape {shape:?} does not hold {len} values")]
    Length { shape: Vec<usize>, len: usize },
    #[error("non-finite value {value} at flat index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("{op}: index {index} out of range for length {len}")]
    Index {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("batch of {batch} rows given {labels} labels")]
    LabelCount { batch: usize, labels: usize },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
}
