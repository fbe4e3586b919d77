//! Minimal dense-tensor autodiff: eager forward evaluation on a tape,
//! reverse-mode gradients, and a real FFT pair for frequency mixing.

mod grad_check;
mod tape;
mod tensor;

pub use grad_check::grad_check;
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },
    #[error("backward requires a scalar loss, got shape {shape}")]
    NotScalarLoss { shape: String },
    #[error("invalid argument: {0}")]
    InvalidArg(String),
}
