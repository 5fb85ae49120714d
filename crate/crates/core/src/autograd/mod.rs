//! Reverse-mode automatic differentiation over dense tensors.

mod backward;
mod graph;
pub mod kernels;

pub use graph::{Graph, Var};
