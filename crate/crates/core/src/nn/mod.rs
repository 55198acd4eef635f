//! Minimal differentiable compute kernels and the Adamax optimizer.
//!
//! Everything here is a plain function pair (forward, backward) over
//! [`Tensor`](crate::tensor::Tensor) values; there is no tape or graph. The
//! model assembly in [`crate::rvgg`] sequences these kernels and keeps the
//! per-layer activations itself. Analytic gradients are verified against
//! central finite differences by [`crate::gradcheck`].

mod adamax;
mod conv;
mod dense;
mod loss;
mod pool;

pub use adamax::{adamax_step, AdamaxHyper, AdamaxState, DecayMode};
pub use conv::{conv2d_3x3, conv2d_3x3_backward};
pub use dense::{
    dense, dense_backward, dropout50, dropout50_backward, relu, relu_backward, DropoutMask,
};
pub use loss::softmax_cross_entropy;
pub use pool::{maxpool2x2_ceil, maxpool2x2_ceil_backward};
