//! Reverse-mode automatic differentiation over `f64` tensors.
//!
//! Gradients are built from the same recorded operations as the forward pass,
//! so [`grad`] with `create_graph = true` returns tensors that can be
//! differentiated again (needed for gradient penalties).

pub mod kernels;
mod math;
mod ops;
mod tensor;

pub use kernels::ConvGeom;
pub use tensor::{grad, grad_enabled, grad_with_seed, no_grad, Tensor};

#[cfg(test)]
mod tests;
