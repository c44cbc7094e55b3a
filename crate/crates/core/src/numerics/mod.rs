//! Dense tensors with a small reverse-mode differentiation tape.
//!
//! Everything is rank-2 except where an op says otherwise. Rows are batch
//! entries. The only implicit expansion is the bias row of [`Tape::add_bias`];
//! the per-row scalar ops ([`Tape::scale_rows`], [`Tape::add_col`]) take an
//! explicit `[rows, 1]` operand.

mod gradcheck;
mod gru;
mod params;
mod scalar;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use gru::{gru_cell, GruParams};
pub use params::{Bound, ParamSet};
pub use scalar::{DType, Scalar};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("dimension error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("axis {axis} out of range for rank {rank} in {op}")]
    Axis { op: &'static str, axis: usize, rank: usize },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("contract violated: {0}")]
    Contract(String),
}
