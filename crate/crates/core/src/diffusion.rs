//! Noise schedule, denoiser preconditioning, training loss and the
//! stochastic churn sampler.
//!
//! The sampler walks the schedule `sigma_0 = sigma_max > ... > sigma_{T-1} =
//! sigma_min`, one update per consecutive pair, so it makes `T - 1` denoiser
//! calls (twice that with the Heun correction). Churn is skipped on the final
//! step and the returned signal sits at noise level `sigma_min`.

use serde::{Deserialize, Serialize};

use crate::denoisers::{Denoiser, PostFilter};
use crate::error::{check_len, Error, Result};
use crate::rng::SeededRng;
use crate::vec_ops::{all_finite, axpby, norm, scaled};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    sigmas: Vec<f64>,
    sigma_min: f64,
    sigma_max: f64,
    rho: f64,
    s_churn: f64,
    gamma: f64,
}

impl NoiseSchedule {
    pub fn new(steps: usize, sigma_min: f64, sigma_max: f64, rho: f64, s_churn: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::InvalidParams(format!(
                "schedule needs at least 2 noise levels, got {steps}"
            )));
        }
        if !(sigma_min > 0.0 && sigma_min < sigma_max && sigma_max.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "need 0 < sigma_min < sigma_max, got {sigma_min} and {sigma_max}"
            )));
        }
        if !(rho >= 1.0 && rho.is_finite()) {
            return Err(Error::InvalidParams(format!("rho must be >= 1, got {rho}")));
        }
        if !(s_churn >= 0.0 && s_churn.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "s_churn must be non-negative, got {s_churn}"
            )));
        }
        let hi = sigma_max.powf(1.0 / rho);
        let lo = sigma_min.powf(1.0 / rho);
        let last = (steps - 1) as f64;
        let mut sigmas: Vec<f64> = (0..steps)
            .map(|i| (hi + i as f64 / last * (lo - hi)).powf(rho))
            .collect();
        // pin the endpoints against rounding in powf
        sigmas[0] = sigma_max;
        sigmas[steps - 1] = sigma_min;
        let gamma = (s_churn / steps as f64).min(std::f64::consts::SQRT_2 - 1.0);
        Ok(Self {
            sigmas,
            sigma_min,
            sigma_max,
            rho,
            s_churn,
            gamma,
        })
    }

    /// T = 70, sigma in [1e-4, 1], rho = 13, S_churn = 10.
    pub fn reference() -> Self {
        Self::new(70, 1e-4, 1.0, 13.0, 10.0).expect("reference schedule is valid")
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn steps(&self) -> usize {
        self.sigmas.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn s_churn(&self) -> f64 {
        self.s_churn
    }
}

pub fn make_schedule(
    steps: usize,
    sigma_min: f64,
    sigma_max: f64,
    rho: f64,
    s_churn: f64,
) -> Result<NoiseSchedule> {
    NoiseSchedule::new(steps, sigma_min, sigma_max, rho, s_churn)
}

/// Input/output scalings that keep a raw network near unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preconditioning {
    pub sigma_data: f64,
}

impl Default for Preconditioning {
    fn default() -> Self {
        Self { sigma_data: 0.5 }
    }
}

impl Preconditioning {
    pub fn new(sigma_data: f64) -> Self {
        Self { sigma_data }
    }

    pub fn c_skip(&self, sigma: f64) -> f64 {
        let sd2 = self.sigma_data * self.sigma_data;
        sd2 / (sigma * sigma + sd2)
    }

    pub fn c_out(&self, sigma: f64) -> f64 {
        sigma * self.sigma_data / (sigma * sigma + self.sigma_data * self.sigma_data).sqrt()
    }

    pub fn c_in(&self, sigma: f64) -> f64 {
        1.0 / (sigma * sigma + self.sigma_data * self.sigma_data).sqrt()
    }

    pub fn c_noise(&self, sigma: f64) -> f64 {
        0.25 * sigma.ln()
    }

    /// Loss weight `1 / c_out^2`.
    pub fn loss_weight(&self, sigma: f64) -> f64 {
        let c = self.c_out(sigma);
        1.0 / (c * c)
    }
}

/// `c_skip * x + c_out * raw_net(c_in * x, c_noise)`.
pub fn precondition_denoise<F>(pre: &Preconditioning, raw_net: F, x_sigma: &[f64], sigma: f64) -> Result<Vec<f64>>
where
    F: FnOnce(&[f64], f64) -> Result<Vec<f64>>,
{
    let input = scaled(x_sigma, pre.c_in(sigma));
    let out = raw_net(&input, pre.c_noise(sigma))?;
    check_len(x_sigma.len(), out.len())?;
    Ok(axpby(pre.c_skip(sigma), x_sigma, pre.c_out(sigma), &out))
}

/// `(x_hat0 - x_sigma) / sigma^2`.
pub fn score_from_denoiser(x_hat0: &[f64], x_sigma: &[f64], sigma: f64) -> Vec<f64> {
    let w = 1.0 / (sigma * sigma);
    x_hat0
        .iter()
        .zip(x_sigma)
        .map(|(d, x)| (d - x) * w)
        .collect()
}

/// `lambda(sigma) * ||D(x0 + sigma * eps, sigma) - x0||^2`.
pub fn training_loss<F>(
    pre: &Preconditioning,
    raw_net: F,
    x0: &[f64],
    sigma: f64,
    epsilon: &[f64],
) -> Result<f64>
where
    F: FnOnce(&[f64], f64) -> Result<Vec<f64>>,
{
    check_len(x0.len(), epsilon.len())?;
    let noisy = axpby(1.0, x0, sigma, epsilon);
    let denoised = precondition_denoise(pre, raw_net, &noisy, sigma)?;
    let err: f64 = denoised
        .iter()
        .zip(x0)
        .map(|(d, x)| (d - x) * (d - x))
        .sum();
    Ok(pre.loss_weight(sigma) * err)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerOrder {
    /// Euler steps, as in the printed algorithm.
    #[default]
    First,
    /// Heun correction re-evaluating the slope at the next noise level.
    Second,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub schedule: NoiseSchedule,
    pub seed: u64,
    pub order: SamplerOrder,
}

impl SamplerConfig {
    pub fn new(schedule: NoiseSchedule, seed: u64) -> Self {
        Self {
            schedule,
            seed,
            order: SamplerOrder::First,
        }
    }

    pub fn with_order(mut self, order: SamplerOrder) -> Self {
        self.order = order;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// One sampler step, for convergence debugging.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub sigma: f64,
    pub sigma_hat: f64,
    pub x_norm: f64,
    pub x0_norm: f64,
}

#[derive(Debug, Clone)]
pub struct SamplerOutput {
    pub x: Vec<f64>,
    pub trace: Vec<TraceRow>,
}

/// Writes a trace as CSV with columns `i,sigma,sigma_hat,x_norm,x0_norm`.
pub fn write_trace_csv<W: std::io::Write>(trace: &[TraceRow], mut out: W) -> Result<()> {
    writeln!(out, "i,sigma,sigma_hat,x_norm,x0_norm")?;
    for r in trace {
        writeln!(
            out,
            "{},{:e},{:e},{:e},{:e}",
            r.step, r.sigma, r.sigma_hat, r.x_norm, r.x0_norm
        )?;
    }
    Ok(())
}

/// Core loop shared by the unconditional and conditioned samplers.
///
/// `estimate(x, sigma)` returns the (possibly conditioned) clean estimate the
/// update moves towards. `init` overrides the initial `N(0, sigma_max^2)`
/// draw; the churn noise still comes from the seeded stream.
pub fn run_sampler<F>(
    cfg: &SamplerConfig,
    len: usize,
    init: Option<Vec<f64>>,
    mut estimate: F,
) -> Result<SamplerOutput>
where
    F: FnMut(&[f64], f64) -> Result<Vec<f64>>,
{
    let sched = &cfg.schedule;
    let sigmas = sched.sigmas();
    let mut rng = SeededRng::new(cfg.seed);
    let mut x = match init {
        Some(v) => {
            check_len(len, v.len())?;
            v
        }
        None => scaled(&rng.normals(len), sched.sigma_max()),
    };
    let mut churn_rng = rng.split(1);
    let steps = sigmas.len() - 1;
    let mut trace = Vec::with_capacity(steps);

    for t in 0..steps {
        let sigma = sigmas[t];
        let sigma_next = sigmas[t + 1];
        let gamma = if t + 1 == steps { 0.0 } else { sched.gamma() };
        let sigma_hat = sigma * (1.0 + gamma);
        let x_hat = if gamma > 0.0 {
            let extra = (sigma_hat * sigma_hat - sigma * sigma).sqrt();
            axpby(1.0, &x, extra, &churn_rng.normals(len))
        } else {
            x
        };

        let x0 = estimate(&x_hat, sigma_hat)?;
        check_len(len, x0.len())?;
        let slope: Vec<f64> = x_hat
            .iter()
            .zip(&x0)
            .map(|(xh, d)| (xh - d) / sigma_hat)
            .collect();
        let h = sigma_next - sigma_hat;
        let mut next = axpby(1.0, &x_hat, h, &slope);

        if cfg.order == SamplerOrder::Second {
            let x0_next = estimate(&next, sigma_next)?;
            check_len(len, x0_next.len())?;
            next = x_hat
                .iter()
                .zip(&slope)
                .zip(next.iter().zip(&x0_next))
                .map(|((xh, d), (xn, dn))| {
                    let d_next = (xn - dn) / sigma_next;
                    xh + h * 0.5 * (d + d_next)
                })
                .collect();
        }

        if !all_finite(&next) {
            return Err(Error::NonFinite { step: t });
        }
        trace.push(TraceRow {
            step: t,
            sigma,
            sigma_hat,
            x_norm: norm(&next),
            x0_norm: norm(&x0),
        });
        x = next;
    }
    Ok(SamplerOutput { x, trace })
}

/// Unconditional generation of `len` samples.
pub fn sample_unconditional(
    cfg: &SamplerConfig,
    denoiser: &dyn Denoiser,
    len: usize,
    post_filter: Option<&dyn PostFilter>,
) -> Result<Vec<f64>> {
    Ok(sample_unconditional_with(cfg, denoiser, len, post_filter, None)?.x)
}

/// As [`sample_unconditional`], optionally starting from a given `x_T`, and
/// returning the per-step trace.
pub fn sample_unconditional_with(
    cfg: &SamplerConfig,
    denoiser: &dyn Denoiser,
    len: usize,
    post_filter: Option<&dyn PostFilter>,
    init: Option<Vec<f64>>,
) -> Result<SamplerOutput> {
    run_sampler(cfg, len, init, |x, sigma| {
        let d = denoiser.denoise(x, sigma)?;
        match post_filter {
            Some(p) => p.apply(&d),
            None => Ok(d),
        }
    })
}
