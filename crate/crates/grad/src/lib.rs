//! Reverse-mode automatic differentiation over dense CPU tensors.
//!
//! A [`Tape`] records operations on tracked [`Var`]s; [`Tape::backward`]
//! returns gradients for every leaf. Values that never touch a tracked
//! input are computed eagerly without recording, which is how frozen
//! networks and inference run.

mod element;
mod error;
mod ops;
mod tape;
mod tensor;

pub use element::{gemm, Element};
pub use error::{Error, Result};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
