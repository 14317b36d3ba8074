//! Differentiable operations on [`Var`](crate::Var).

mod conv;
mod elementwise;
mod linalg;
mod reduce;
mod shape;
