//! Dense `f64` tensors and a define-by-run tape for reverse-mode
//! differentiation: just enough to train small convolutional models and to
//! take gradients of a scalar score with respect to its input.

mod error;
mod kernels;
pub mod serialize;
mod tape;
mod tensor;

pub use error::{Result, TensorError};
pub use tape::{grad_wrt_input, value_and_grad, Tape, Var};
pub use tensor::Tensor;
