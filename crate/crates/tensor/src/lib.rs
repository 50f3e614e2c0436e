//! Dense `f64` tensors with an eager, tape-based reverse-mode autodiff.
//!
//! Forward ops are methods on [`Var`], each recorded on a [`Tape`]. A single
//! call to [`Tape::backward`] yields [`Gradients`], which can be folded into a
//! [`ParamStore`] and consumed by [`Adam`].

mod activation;
mod backward;
pub mod checkpoint;
mod error;
pub mod gradcheck;
mod linalg;
mod ops;
mod optim;
mod params;
pub mod rng;
mod tape;
mod tensor;

pub use activation::{Activation, RRELU_LOWER, RRELU_SLOPE, RRELU_UPPER};
pub use checkpoint::Checkpoint;
pub use error::{Result, TensorError};
pub use optim::{Adam, AdamState};
pub use params::{Param, ParamId, ParamStore};
pub use rng::{seeded, split, SeededRng};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
