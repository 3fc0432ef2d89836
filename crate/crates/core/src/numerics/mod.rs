//! Dense `f64` tensors, reverse-mode autodiff, seeded randomness and dropout.

mod dropout;
mod gradcheck;
mod rng;
mod tape;
mod tensor;

pub use dropout::{sample_dropout_mask, DropoutMask};
pub use gradcheck::{grad_check, grad_check_many};
pub use rng::RngState;
pub use tape::{Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::log_sum_exp;

/// Guard below which a row is treated as degenerate during normalization.
pub const NORM_EPS: f64 = 1e-12;
