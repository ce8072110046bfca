//! Minimal deterministic tensor algebra with reverse-mode autodiff and
//! the Adam optimizer.

pub mod adam;
pub mod graph;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, Parameter};
pub use graph::{Graph, Var, MASK_NEG};
pub use tensor::Tensor;
