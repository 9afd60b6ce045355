//! Minimal dense-tensor reverse-mode automatic differentiation.
//!
//! The primitive set is exactly what the recurrent cells and the weighted
//! mixture need: affine maps, elementwise arithmetic, the four cell
//! activations, softmax, cross-entropy, row gathers, batch normalization
//! without affine parameters, and variational dropout masks.

mod dropout;
mod graph;
mod optim;
mod real;
mod tensor;

pub use dropout::{check_rate, variational_dropout_mask};
pub use graph::{softmax, Gradients, Graph, NodeId};
pub use optim::{all_finite, clip_global_norm, Optimizer, OptimizerConfig, OptimizerKind};
pub use real::Real;
pub use tensor::Tensor;

/// Epsilon added to the batch variance in search-mode normalization.
pub const BATCH_NORM_EPS: f64 = 1e-5;
