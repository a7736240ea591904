//! Minimal dense reverse-mode autodiff in double precision.
//!
//! Everything is a 2-D row-major [`Mat`]. Models build a fresh [`Graph`] per
//! forward pass, call [`Graph::backward`] on a scalar loss and read parameter
//! gradients from the returned [`Gradients`].

mod graph;
mod mat;

pub use graph::{Gradients, Graph, Unary, Var};
pub use mat::{gemm, Mat};
