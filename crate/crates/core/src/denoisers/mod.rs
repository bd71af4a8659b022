//! The denoiser contract and its implementations.
//!
//! Guidance differentiates through the denoiser, so besides `denoise` every
//! implementation supplies an explicit vector-Jacobian product.

mod gaussian;
mod linear_cqt;

pub use gaussian::{gaussian_denoise, gaussian_vjp, GaussianAnalyticDenoiser};
pub use linear_cqt::{
    linear_cqt_denoise, train_linear, GainCheckpoint, LinearCqtDenoiser, TrainConfig, TrainReport,
};

use crate::cqt::CqtPlan;
use crate::error::Result;

pub trait Denoiser: Send + Sync {
    /// Estimate of the clean signal from `x_sigma` at noise level `sigma`.
    fn denoise(&self, x_sigma: &[f64], sigma: f64) -> Result<Vec<f64>>;

    /// `J^T v`, where `J` is the Jacobian of [`Denoiser::denoise`] with respect
    /// to `x_sigma`.
    fn vjp(&self, x_sigma: &[f64], sigma: f64, cotangent: &[f64]) -> Result<Vec<f64>>;
}

/// Linear filter applied to the denoiser output inside the sampler.
pub trait PostFilter: Send + Sync {
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn adjoint(&self, v: &[f64]) -> Result<Vec<f64>>;
}

impl PostFilter for CqtPlan {
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.dc_notch(x)
    }

    // the notch is a real, even spectral mask
    fn adjoint(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.dc_notch(v)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn denoise(&self, x_sigma: &[f64], sigma: f64) -> Result<Vec<f64>> {
        (**self).denoise(x_sigma, sigma)
    }

    fn vjp(&self, x_sigma: &[f64], sigma: f64, cotangent: &[f64]) -> Result<Vec<f64>> {
        (**self).vjp(x_sigma, sigma, cotangent)
    }
}
