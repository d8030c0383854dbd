//! Small dense feed-forward network used as the Q-function approximator.
//!
//! Parameters are `f64` throughout. Batched products go through
//! `matrixmultiply::dgemm`; everything else is plain loops.

mod adam;
mod network;
mod serialize;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use network::{Activation, ForwardCache, Gradients, NetworkParams};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("malformed model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
