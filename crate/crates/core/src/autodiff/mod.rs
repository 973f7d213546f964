//! Tape-based reverse-mode automatic differentiation over dense tensors.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{grad_check, DEFAULT_STEP};
pub use graph::{logsumexp, GradientMap, Graph, NodeId, Primitive};
pub use tensor::Tensor;
