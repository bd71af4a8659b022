use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::Denoiser;
use crate::error::{check_len, Error, Result};
use crate::rng::SeededRng;

/// Posterior-mean denoiser for a zero-mean stationary Gaussian prior with
/// circulant covariance. The covariance eigenvalues are indexed by DFT bin.
#[derive(Clone)]
pub struct GaussianAnalyticDenoiser {
    spectrum: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for GaussianAnalyticDenoiser {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GaussianAnalyticDenoiser")
            .field("len", &self.spectrum.len())
            .finish_non_exhaustive()
    }
}

impl GaussianAnalyticDenoiser {
    /// `spectrum[k]` is the covariance eigenvalue of DFT bin `k`. It must be
    /// non-negative and even (`spectrum[k] == spectrum[n - k]`) so the
    /// covariance is real.
    pub fn new(spectrum: Vec<f64>) -> Result<Self> {
        let n = spectrum.len();
        if n == 0 {
            return Err(Error::InvalidParams("empty covariance spectrum".into()));
        }
        if spectrum.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(Error::InvalidParams(
                "covariance eigenvalues must be finite and non-negative".into(),
            ));
        }
        for k in 1..n {
            let (a, b) = (spectrum[k], spectrum[n - k]);
            if (a - b).abs() > 1e-12 * a.max(b).max(f64::MIN_POSITIVE) {
                return Err(Error::InvalidParams(format!(
                    "covariance spectrum is not even at bin {k}"
                )));
            }
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
            spectrum,
        })
    }

    /// White prior with the given variance.
    pub fn white(len: usize, variance: f64) -> Result<Self> {
        Self::new(vec![variance; len])
    }

    /// Periodic AR(1) prior with coefficient `a` and marginal variance
    /// `variance`: autocovariance `variance * (a^t + a^(n-t)) / (1 + a^n)`.
    pub fn circular_ar1(len: usize, a: f64, variance: f64) -> Result<Self> {
        if !(a.abs() < 1.0) {
            return Err(Error::InvalidParams(format!("|a| must be < 1, got {a}")));
        }
        let n = len as f64;
        let an = a.powf(n);
        let scale = variance * (1.0 - a * a) * (1.0 - an) / (1.0 + an);
        let spectrum = (0..len)
            .map(|k| {
                let w = 2.0 * std::f64::consts::PI * k as f64 / n;
                scale / (1.0 - 2.0 * a * w.cos() + a * a)
            })
            .collect();
        Self::new(spectrum)
    }

    /// Prior estimated from the power spectrum of the reliable part of `y`,
    /// smoothed over `smooth` neighbouring bins. `observed_fraction` rescales
    /// for zeroed gaps.
    pub fn from_periodogram(y: &[f64], observed_fraction: f64, smooth: usize) -> Result<Self> {
        let n = y.len();
        if n == 0 || !(observed_fraction > 0.0) {
            return Err(Error::InvalidParams(
                "periodogram prior needs a non-empty, partly observed signal".into(),
            ));
        }
        let mut buf: Vec<Complex64> = y.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let power: Vec<f64> = buf
            .iter()
            .map(|c| c.norm_sqr() / (n as f64 * observed_fraction))
            .collect();
        let half = smooth / 2;
        let mut spectrum: Vec<f64> = (0..n)
            .map(|k| {
                let mut acc = 0.0;
                for j in 0..=2 * half {
                    acc += power[(k + n + j - half) % n];
                }
                acc / (2 * half + 1) as f64
            })
            .collect();
        // symmetrise against rounding
        for k in 1..n {
            let m = 0.5 * (spectrum[k] + spectrum[n - k]);
            spectrum[k] = m;
            spectrum[n - k] = m;
        }
        Self::new(spectrum)
    }

    pub fn len(&self) -> usize {
        self.spectrum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spectrum.is_empty()
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    /// Wiener gain `lambda_k / (lambda_k + sigma^2)` per bin.
    pub fn gains(&self, sigma: f64) -> Vec<f64> {
        let s2 = sigma * sigma;
        self.spectrum
            .iter()
            .map(|&l| if l == 0.0 { 0.0 } else { l / (l + s2) })
            .collect()
    }

    fn filter(&self, x: &[f64], gain: impl Fn(usize) -> f64) -> Result<Vec<f64>> {
        check_len(self.spectrum.len(), x.len())?;
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.process(&mut buf);
        for (k, c) in buf.iter_mut().enumerate() {
            *c *= gain(k);
        }
        self.ifft.process(&mut buf);
        let n = x.len() as f64;
        Ok(buf.iter().map(|c| c.re / n).collect())
    }

    /// Closed-form score of the noisy marginal, `-(Sigma + sigma^2 I)^-1 x`.
    pub fn score(&self, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
        let s2 = sigma * sigma;
        self.filter(x, |k| -1.0 / (self.spectrum[k] + s2))
    }

    /// Draw from the prior.
    pub fn sample_prior(&self, rng: &mut SeededRng) -> Vec<f64> {
        let white = rng.normals(self.spectrum.len());
        self.filter(&white, |k| self.spectrum[k].sqrt())
            .expect("length matches by construction")
    }
}

impl Denoiser for GaussianAnalyticDenoiser {
    fn denoise(&self, x_sigma: &[f64], sigma: f64) -> Result<Vec<f64>> {
        let g = self.gains(sigma);
        self.filter(x_sigma, |k| g[k])
    }

    // symmetric linear map, so the vjp is the map itself
    fn vjp(&self, _x_sigma: &[f64], sigma: f64, cotangent: &[f64]) -> Result<Vec<f64>> {
        let g = self.gains(sigma);
        self.filter(cotangent, |k| g[k])
    }
}

pub fn gaussian_denoise(d: &GaussianAnalyticDenoiser, x_sigma: &[f64], sigma: f64) -> Result<Vec<f64>> {
    d.denoise(x_sigma, sigma)
}

pub fn gaussian_vjp(
    d: &GaussianAnalyticDenoiser,
    x_sigma: &[f64],
    sigma: f64,
    cotangent: &[f64],
) -> Result<Vec<f64>> {
    d.vjp(x_sigma, sigma, cotangent)
}
