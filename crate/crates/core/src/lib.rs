//! Multi-task image restoration at desk scale.
//!
//! - [`tensor`]: dense float tensors on a reverse-mode autodiff tape,
//!   finite-difference verification, and a binary checkpoint container.
//! - [`model`]: a patch-token transformer with per-task convolutional
//!   heads/tails and task-conditioned decoding.
//! - [`data`]: paired-dataset preparation (smoothing, five-angle rotation
//!   augmentation, leak-free splits) and synthetic corruption generators.
//! - [`train`]: the multi-task L1 objective, Adam, and the training loop.
//! - [`metrics`]: PSNR/SSIM scoring with per-image wall-clock timing.
//! - [`dcp`]: a dark-channel-prior dehazing baseline.

pub mod data;
pub mod dcp;
pub mod error;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
