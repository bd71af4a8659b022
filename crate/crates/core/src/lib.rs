//! Zero-shot audio inpainting with diffusion posterior sampling.
//!
//! The crate is organised by subsystem:
//!
//! - [`cqt`]: invertible octave-wise constant-Q transform and the DC notch
//!   post-filter.
//! - [`diffusion`]: noise schedule, denoiser preconditioning, training loss
//!   and the stochastic sampler.
//! - [`denoisers`]: the denoiser contract plus a closed-form Gaussian
//!   denoiser and a trainable linear CQT-domain denoiser.
//! - [`inpaint`]: gap masks, reconstruction guidance, data consistency and
//!   the conditioned sampler.
//! - [`janssen`]: autoregressive interpolation baseline.
//! - [`metrics`]: SNR and log-spectral distance.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cqt;
pub mod denoisers;
pub mod diffusion;
pub mod error;
pub mod inpaint;
pub mod janssen;
pub mod metrics;
pub mod rng;
mod vec_ops;

pub use error::{Error, Result};
