//! Channel harmonization for multi-montage EEG-like time series.
//!
//! The core idea: a spatial attention layer scores every input sensor with a
//! learnable truncated 2-D Fourier series evaluated at the sensor's normalized
//! planar coordinates, then mixes the input channels into a fixed number of
//! output channels via a softmax-weighted sum. Because the score function is
//! defined over coordinates rather than channel indices, one trained model
//! accepts recordings from any montage.
//!
//! The crate bundles everything needed to study that mechanism at desk scale:
//!
//! * [`montage`] — sensor geometry, azimuthal projection, normalized layouts
//! * [`attention`] — the spatial attention layer with analytic gradients
//! * [`nn`] — minimal differentiable kernels (conv/pool/dense/loss) and Adamax
//! * [`rvgg`] — the reduced-VGG classifier trunk and model assembly
//! * [`datagen`] — synthetic dipole data, preprocessing chain, dataset splits
//! * [`train`] / [`matrix`] — training loop, evaluation, experiment matrix
//! * [`stats`] — Welch's unequal-variance t-test
//! * [`gradcheck`] — finite-difference verification of every kernel
//!
//! With the default `parallel` feature, batch work is distributed with rayon;
//! disabling it yields a fully sequential build with identical results.

pub mod attention;
pub mod checkpoint;
pub mod datagen;
pub mod error;
pub mod gradcheck;
pub mod matrix;
pub mod montage;
pub mod nn;
pub mod par;
pub mod rng;
pub mod rvgg;
pub mod stats;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
