//! Differentiable primitive layers.
//!
//! Each layer has an explicit forward pass that returns its output plus a
//! context holding the cached activations its backward pass needs, and a
//! backward pass that turns an upstream gradient into input and parameter
//! gradients. Ownership of the context ties every backward call to the
//! forward that produced it.

mod affine;
mod batchnorm;
mod conv1d;
mod relu;
mod softmax;

pub use affine::{Affine, AffineCtx, AffineGrads};
pub use batchnorm::{BatchNorm1d, BatchNormCtx, BatchNormGrads};
pub use conv1d::{Conv1d, Conv1dCtx, Conv1dGrads};
pub use relu::{relu_backward, relu_forward, ReluCtx};
pub use softmax::{softmax, softmax_backward, softmax_cross_entropy, SoftmaxCe};

/// Whether a forward pass updates batch statistics (train) or uses the
/// stored running statistics (eval).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
