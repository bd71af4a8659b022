//! A toy trainable denoiser: real gains per CQT bin, shared by every frame of
//! that bin, wrapped by the inverse transform and the usual preconditioning.
//!
//! ```text
//! D(x, sigma) = c_skip x + c_out ICQT(g * CQT(c_in x))
//! ```
//!
//! The raw network is linear with no additive term, so its gradient with
//! respect to the gains and its vector-Jacobian product are both exact.

use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::Denoiser;
use crate::cqt::{CqtParams, CqtPlan, OctaveCoeffs};
use crate::diffusion::{precondition_denoise, Preconditioning};
use crate::error::{check_len, Error, Result};
use crate::rng::SeededRng;
use crate::vec_ops::{axpby, scaled};

#[derive(Debug, Clone)]
pub struct LinearCqtDenoiser {
    plan: Arc<CqtPlan>,
    gains: Vec<f64>,
    ema_gains: Vec<f64>,
    pre: Preconditioning,
    use_ema: bool,
}

impl LinearCqtDenoiser {
    /// Unit gains, i.e. the raw network starts as the band projection.
    pub fn new(plan: Arc<CqtPlan>, pre: Preconditioning) -> Self {
        let k = plan.num_bins();
        Self {
            plan,
            gains: vec![1.0; k],
            ema_gains: vec![1.0; k],
            pre,
            use_ema: true,
        }
    }

    pub fn with_gains(mut self, gains: Vec<f64>) -> Result<Self> {
        check_len(self.plan.num_bins(), gains.len())?;
        self.ema_gains = gains.clone();
        self.gains = gains;
        Ok(self)
    }

    pub fn from_checkpoint(plan: Arc<CqtPlan>, ckpt: &GainCheckpoint) -> Result<Self> {
        let p = plan.params();
        let c = &ckpt.params;
        if p.sample_rate != c.sample_rate
            || p.bins_per_octave != c.bins_per_octave
            || p.num_octaves != c.num_octaves
            || p.f_min != c.f_min
            || p.transition != c.transition
        {
            return Err(Error::InvalidParams(
                "checkpoint filter bank does not match the plan".into(),
            ));
        }
        check_len(plan.num_bins(), ckpt.gains.len())?;
        check_len(plan.num_bins(), ckpt.ema_gains.len())?;
        Ok(Self {
            plan,
            gains: ckpt.gains.clone(),
            ema_gains: ckpt.ema_gains.clone(),
            pre: Preconditioning::new(ckpt.sigma_data),
            use_ema: true,
        })
    }

    pub fn checkpoint(&self) -> GainCheckpoint {
        GainCheckpoint {
            params: *self.plan.params(),
            sigma_data: self.pre.sigma_data,
            gains: self.gains.clone(),
            ema_gains: self.ema_gains.clone(),
        }
    }

    pub fn plan(&self) -> &CqtPlan {
        &self.plan
    }

    pub fn preconditioning(&self) -> &Preconditioning {
        &self.pre
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn ema_gains(&self) -> &[f64] {
        &self.ema_gains
    }

    /// Chooses between EMA gains (the default) and raw gains for `denoise`.
    pub fn set_use_ema(&mut self, use_ema: bool) {
        self.use_ema = use_ema;
    }

    fn active_gains(&self) -> &[f64] {
        if self.use_ema {
            &self.ema_gains
        } else {
            &self.gains
        }
    }

    fn raw_with(&self, gains: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        let mut c = self.plan.forward(z)?;
        c.scale_bins(gains);
        self.plan.inverse(&c)
    }

    /// `ICQT(g * CQT(z))`.
    pub fn raw_net(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.raw_with(self.active_gains(), z)
    }

    /// Transpose of [`LinearCqtDenoiser::raw_net`]: `CQT^T (g * ICQT^T v)`,
    /// with `ICQT^T = CQT S^+`.
    pub fn raw_net_adjoint(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut c = self.plan.forward(&self.plan.frame_inverse(v)?)?;
        c.scale_bins(self.active_gains());
        self.plan.adjoint(&c)
    }
}

impl Denoiser for LinearCqtDenoiser {
    fn denoise(&self, x_sigma: &[f64], sigma: f64) -> Result<Vec<f64>> {
        precondition_denoise(&self.pre, |z, _| self.raw_net(z), x_sigma, sigma)
    }

    fn vjp(&self, _x_sigma: &[f64], sigma: f64, cotangent: &[f64]) -> Result<Vec<f64>> {
        let back = self.raw_net_adjoint(cotangent)?;
        let scale = self.pre.c_out(sigma) * self.pre.c_in(sigma);
        Ok(axpby(self.pre.c_skip(sigma), cotangent, scale, &back))
    }
}

pub fn linear_cqt_denoise(d: &LinearCqtDenoiser, x_sigma: &[f64], sigma: f64) -> Result<Vec<f64>> {
    d.denoise(x_sigma, sigma)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    /// Step size of the curvature-normalised gradient step.
    pub learning_rate: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Noisy versions drawn per dataset signal, once, before training.
    pub noise_draws: usize,
    /// Pairs per step; `None` uses all of them.
    pub batch_size: Option<usize>,
    pub ema_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            learning_rate: 0.05,
            sigma_min: 1e-4,
            sigma_max: 1.0,
            noise_draws: 4,
            batch_size: None,
            ema_decay: 0.999,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean weighted loss over each step's batch, before the update.
    pub loss_curve: Vec<f64>,
}

impl TrainReport {
    /// Trailing moving average; entry `i` averages steps `i..i + window`.
    pub fn smoothed(&self, window: usize) -> Vec<f64> {
        let w = window.max(1);
        self.loss_curve
            .windows(w)
            .map(|s| s.iter().sum::<f64>() / w as f64)
            .collect()
    }

    /// CSV with columns `step,loss,smoothed10`; the smoothed column is empty
    /// until ten steps are available.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let smooth = self.smoothed(10);
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "loss", "smoothed10"]).map_err(csv_err)?;
        for (i, loss) in self.loss_curve.iter().enumerate() {
            let s = if i >= 9 {
                format!("{:e}", smooth[i - 9])
            } else {
                String::new()
            };
            w.write_record([i.to_string(), format!("{loss:e}"), s])
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct TrainingPair {
    coeffs: OctaveCoeffs,
    target: Vec<f64>,
}

/// Fits the gains by minimising the weighted denoising loss.
///
/// Each dataset signal is corrupted `noise_draws` times with a log-uniform
/// noise level and Gaussian noise. With preconditioning the weighted loss of
/// one pair is `||ICQT(g * C) - t||^2`, where `C = CQT(c_in x_sigma)` and
/// `t = (x0 - c_skip x_sigma) / c_out`. Each step is a gradient step scaled
/// per bin by the loss curvature.
pub fn train_linear(
    d: &mut LinearCqtDenoiser,
    dataset: &[Vec<f64>],
    cfg: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<TrainReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = d.plan.signal_length();
    for x in dataset {
        check_len(n, x.len())?;
    }
    if !(cfg.sigma_min > 0.0 && cfg.sigma_min <= cfg.sigma_max) || cfg.noise_draws == 0 {
        return Err(Error::InvalidParams(
            "training needs 0 < sigma_min <= sigma_max and at least one noise draw".into(),
        ));
    }
    if !(0.0..1.0).contains(&cfg.ema_decay) {
        return Err(Error::InvalidParams(format!(
            "ema_decay must lie in [0, 1), got {}",
            cfg.ema_decay
        )));
    }

    let pre = d.pre;
    let mut pairs = Vec::with_capacity(dataset.len() * cfg.noise_draws);
    for x0 in dataset {
        for _ in 0..cfg.noise_draws {
            let sigma = rng.log_uniform(cfg.sigma_min, cfg.sigma_max);
            let eps = rng.normals(n);
            let noisy = axpby(1.0, x0, sigma, &eps);
            let z = scaled(&noisy, pre.c_in(sigma));
            let target = axpby(
                1.0 / pre.c_out(sigma),
                x0,
                -pre.c_skip(sigma) / pre.c_out(sigma),
                &noisy,
            );
            pairs.push(TrainingPair {
                coeffs: d.plan.forward(&z)?,
                target,
            });
        }
    }

    let k = d.plan.num_bins();
    let mut curvature = vec![0.0; k];
    for p in &pairs {
        for (c, e) in curvature.iter_mut().zip(d.plan.per_bin_synthesis_energy(&p.coeffs)?) {
            *c += 2.0 * e / pairs.len() as f64;
        }
    }
    let curvature_floor = curvature.iter().cloned().fold(0.0, f64::max) * 1e-12;

    let batch = cfg.batch_size.unwrap_or(pairs.len()).clamp(1, pairs.len());
    let mut loss_curve = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let indices: Vec<usize> = if batch == pairs.len() {
            (0..pairs.len()).collect()
        } else {
            (0..batch).map(|_| rng.below(pairs.len())).collect()
        };
        let mut grad = vec![0.0; k];
        let mut loss = 0.0;
        for &i in &indices {
            let p = &pairs[i];
            let mut c = p.coeffs.clone();
            c.scale_bins(&d.gains);
            let out = d.plan.inverse(&c)?;
            let resid: Vec<f64> = out.iter().zip(&p.target).map(|(o, t)| o - t).collect();
            loss += resid.iter().map(|r| r * r).sum::<f64>();
            let back = d.plan.forward(&d.plan.frame_inverse(&resid)?)?;
            for (q, g) in grad.iter_mut().enumerate() {
                let dot: f64 = p
                    .coeffs
                    .bin(q)
                    .iter()
                    .zip(back.bin(q))
                    .map(|(a, b)| a.re * b.re + a.im * b.im)
                    .sum();
                *g += 2.0 * dot;
            }
        }
        let m = indices.len() as f64;
        loss /= m;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                detail: format!("loss {loss} with gain range {:?}", min_max(&d.gains)),
            });
        }
        loss_curve.push(loss);
        for q in 0..k {
            if curvature[q] > curvature_floor {
                d.gains[q] -= cfg.learning_rate * (grad[q] / m) / curvature[q];
            }
        }
        for (e, g) in d.ema_gains.iter_mut().zip(&d.gains) {
            *e = cfg.ema_decay * *e + (1.0 - cfg.ema_decay) * g;
        }
    }
    Ok(TrainReport { loss_curve })
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Malformed(e.to_string())
}

/// Trained gains plus the filter bank they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct GainCheckpoint {
    pub params: CqtParams,
    pub sigma_data: f64,
    pub gains: Vec<f64>,
    pub ema_gains: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    cqt: CqtParams,
    sigma_data: f64,
}

impl GainCheckpoint {
    /// CSV rows `octave,bin,gain,ema_gain`.
    pub fn write_gains_csv<W: Write>(&self, out: W) -> Result<()> {
        let b = self.params.bins_per_octave;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["octave", "bin", "gain", "ema_gain"])
            .map_err(csv_err)?;
        for (q, (g, e)) in self.gains.iter().zip(&self.ema_gains).enumerate() {
            w.write_record([
                (q / b).to_string(),
                (q % b).to_string(),
                format!("{g:e}"),
                format!("{e:e}"),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON sidecar with the filter-bank parameters.
    pub fn write_sidecar<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(
            out,
            &Sidecar {
                cqt: self.params,
                sigma_data: self.sigma_data,
            },
        )
        .map_err(|e| Error::Malformed(e.to_string()))
    }

    pub fn read<R1: Read, R2: Read>(gains_csv: R1, sidecar: R2) -> Result<Self> {
        let side: Sidecar =
            serde_json::from_reader(sidecar).map_err(|e| Error::Malformed(e.to_string()))?;
        let k = side.cqt.num_bins();
        let b = side.cqt.bins_per_octave;
        let mut gains = vec![f64::NAN; k];
        let mut ema = vec![f64::NAN; k];
        let mut r = csv::Reader::from_reader(gains_csv);
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != 4 {
                return Err(Error::Malformed(format!("expected 4 columns, got {}", rec.len())));
            }
            let parse = |i: usize| -> Result<f64> {
                rec[i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Malformed(format!("column {i}: {e}")))
            };
            let (o, bin) = (parse(0)? as usize, parse(1)? as usize);
            let q = o * b + bin;
            if bin >= b || q >= k {
                return Err(Error::Malformed(format!("bin ({o}, {bin}) outside the plan")));
            }
            gains[q] = parse(2)?;
            ema[q] = parse(3)?;
        }
        if gains.iter().chain(&ema).any(|g| g.is_nan()) {
            return Err(Error::Malformed("checkpoint does not cover every bin".into()));
        }
        Ok(Self {
            params: side.cqt,
            sigma_data: side.sigma_data,
            gains,
            ema_gains: ema,
        })
    }
}
