//! Gap masks, reconstruction guidance and data consistency, and the
//! conditioned sampler built on [`run_sampler`].
//!
//! Per sampler step the clean estimate is
//!
//! ```text
//! x0  = H_post(D(x~, s))
//! x0 -= s^2 * xi(s) * grad_x~ ||y - m * x0||^2
//! x0' = m_s * y + (1 - m_s) * x0
//! ```
//!
//! with the binary mask `m` in the likelihood and the smoothed mask `m_s` in
//! the replacement.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoisers::{Denoiser, PostFilter};
use crate::diffusion::{run_sampler, SamplerConfig, SamplerOutput};
use crate::error::{check_len, Error, Result};
use crate::vec_ops::{axpby, norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub start: usize,
    pub length: usize,
}

impl Gap {
    pub fn end(&self) -> usize {
        self.start + self.length
    }
}

/// Sorted, disjoint gaps inside `[0, signal_length)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapSpec {
    gaps: Vec<Gap>,
    signal_length: usize,
}

impl GapSpec {
    /// Sorts the gaps and drops zero-length ones. Overlapping or
    /// out-of-range gaps are rejected.
    pub fn new(mut gaps: Vec<Gap>, signal_length: usize) -> Result<Self> {
        gaps.retain(|g| g.length > 0);
        gaps.sort_by_key(|g| g.start);
        for g in &gaps {
            if g.end() > signal_length {
                return Err(Error::InvalidGaps(format!(
                    "gap [{}, {}) exceeds signal length {signal_length}",
                    g.start,
                    g.end()
                )));
            }
        }
        for w in gaps.windows(2) {
            if w[1].start < w[0].end() {
                return Err(Error::InvalidGaps(format!(
                    "gaps starting at {} and {} overlap",
                    w[0].start, w[1].start
                )));
            }
        }
        Ok(Self {
            gaps,
            signal_length,
        })
    }

    pub fn none(signal_length: usize) -> Self {
        Self {
            gaps: Vec::new(),
            signal_length,
        }
    }

    /// `count` gaps of `length` samples centred at `(2i + 1) N / (2 count)`.
    pub fn equally_spaced(signal_length: usize, count: usize, length: usize) -> Result<Self> {
        let gaps = (0..count)
            .map(|i| {
                let centre = (2 * i + 1) * signal_length / (2 * count);
                Gap {
                    start: centre.saturating_sub(length / 2),
                    length,
                }
            })
            .collect();
        Self::new(gaps, signal_length)
    }

    pub fn gaps(&self) -> &[Gap] {
        &self.gaps
    }

    pub fn signal_length(&self) -> usize {
        self.signal_length
    }

    pub fn is_empty(&self) -> bool {
        self.gaps.is_empty()
    }

    /// `m`: 0 inside gaps, 1 elsewhere.
    pub fn binary_mask(&self) -> Vec<f64> {
        let mut m = vec![1.0; self.signal_length];
        for g in &self.gaps {
            m[g.start..g.end()].fill(0.0);
        }
        m
    }

    /// `true` on gap samples.
    pub fn gap_region(&self) -> Vec<bool> {
        self.binary_mask().iter().map(|&v| v == 0.0).collect()
    }

    /// Same gaps with every position shifted by `offset` samples and the
    /// signal extended to `signal_length`.
    pub fn shifted(&self, offset: usize, signal_length: usize) -> Result<Self> {
        let gaps = self
            .gaps
            .iter()
            .map(|g| Gap {
                start: g.start + offset,
                length: g.length,
            })
            .collect();
        Self::new(gaps, signal_length)
    }
}

/// On-disk gap list in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapSpecFile {
    pub sample_rate: u32,
    pub gaps: Vec<GapMs>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapMs {
    pub start_ms: f64,
    pub length_ms: f64,
}

impl GapSpecFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidGaps(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    /// Converts to samples, rounding to the nearest sample. The file's
    /// sample rate must match the audio's.
    pub fn to_spec(&self, sample_rate: u32, signal_length: usize) -> Result<GapSpec> {
        if self.sample_rate != sample_rate {
            return Err(Error::InvalidGaps(format!(
                "gap file is for {} Hz, audio is {} Hz",
                self.sample_rate, sample_rate
            )));
        }
        let fs = sample_rate as f64;
        let mut gaps = Vec::with_capacity(self.gaps.len());
        for g in &self.gaps {
            if !(g.start_ms >= 0.0 && g.length_ms >= 0.0 && g.start_ms.is_finite() && g.length_ms.is_finite()) {
                return Err(Error::InvalidGaps(format!(
                    "gap times must be finite and non-negative, got {g:?}"
                )));
            }
            gaps.push(Gap {
                start: (g.start_ms * fs / 1000.0).round() as usize,
                length: (g.length_ms * fs / 1000.0).round() as usize,
            });
        }
        GapSpec::new(gaps, signal_length)
    }

    pub fn from_spec(spec: &GapSpec, sample_rate: u32) -> Self {
        let fs = sample_rate as f64;
        Self {
            sample_rate,
            gaps: spec
                .gaps()
                .iter()
                .map(|g| GapMs {
                    start_ms: g.start as f64 * 1000.0 / fs,
                    length_ms: g.length as f64 * 1000.0 / fs,
                })
                .collect(),
        }
    }
}

/// Fade length in samples for a duration in milliseconds.
pub fn fade_samples(fade_ms: f64, sample_rate: f64) -> usize {
    (fade_ms * sample_rate / 1000.0).round() as usize
}

/// Observations and masks. Noise-free: `y = m * x`.
#[derive(Debug, Clone, PartialEq)]
pub struct InpaintingProblem {
    pub spec: GapSpec,
    pub y: Vec<f64>,
    pub mask: Vec<f64>,
    pub mask_smooth: Vec<f64>,
    pub fade_len: usize,
    /// Carried for completeness; every operation assumes 0.
    pub sigma_n: f64,
}

impl InpaintingProblem {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Observed samples outside every fade, where the output equals `y`.
    pub fn protected(&self) -> Vec<bool> {
        self.mask_smooth.iter().map(|&s| s == 1.0).collect()
    }

    pub fn fully_observed(&self) -> bool {
        self.spec.is_empty()
    }

    pub fn nothing_observed(&self) -> bool {
        self.mask.iter().all(|&m| m == 0.0)
    }
}

/// Builds masks and observations from `x`. Each gap edge bordering reliable
/// signal gets a raised-cosine fade of `round(fade_ms * fs / 1000)` reliable
/// samples, falling from 1 towards 0 as the gap approaches.
pub fn build_problem(spec: &GapSpec, x: &[f64], fade_ms: f64, sample_rate: f64) -> Result<InpaintingProblem> {
    let n = spec.signal_length();
    check_len(n, x.len())?;
    if !(fade_ms >= 0.0 && sample_rate > 0.0) {
        return Err(Error::InvalidParams(format!(
            "fade {fade_ms} ms at {sample_rate} Hz"
        )));
    }
    let fade = fade_samples(fade_ms, sample_rate);
    let mask = spec.binary_mask();
    let mut smooth = mask.clone();
    let ramp = |j: usize| 0.5 * (1.0 + (std::f64::consts::PI * (j + 1) as f64 / (fade + 1) as f64).cos());

    let gaps = spec.gaps();
    for (i, g) in gaps.iter().enumerate() {
        let prev_end = if i == 0 { 0 } else { gaps[i - 1].end() };
        let next_start = gaps.get(i + 1).map_or(n, |h| h.start);
        let reliable_before = g.start - prev_end;
        let reliable_after = next_start - g.end();
        // the neighbour's fade takes its share of a shared reliable run
        let need_before = if i == 0 { fade } else { 2 * fade };
        let need_after = if i + 1 == gaps.len() { fade } else { 2 * fade };
        let collide = |have: usize, need: usize| have > 0 && have < need;
        if collide(reliable_before, need_before) || collide(reliable_after, need_after) {
            return Err(Error::InvalidGaps(format!(
                "{fade}-sample fades do not fit around the gap at sample {}",
                g.start
            )));
        }
        if reliable_before > 0 {
            for j in 0..fade {
                smooth[g.start - fade + j] = ramp(j);
            }
        }
        if reliable_after > 0 {
            for j in 0..fade {
                smooth[g.end() + j] = ramp(fade - 1 - j);
            }
        }
    }

    let y = x.iter().zip(&mask).map(|(v, m)| v * m).collect();
    Ok(InpaintingProblem {
        spec: spec.clone(),
        y,
        mask,
        mask_smooth: smooth,
        fade_len: fade,
        sigma_n: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidanceConfig {
    pub xi_prime: f64,
    #[serde(default = "default_norm_floor")]
    pub norm_floor: f64,
}

fn default_norm_floor() -> f64 {
    1e-12
}

impl GuidanceConfig {
    pub fn new(xi_prime: f64) -> Result<Self> {
        if !(xi_prime >= 0.0 && xi_prime.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "guidance strength must be finite and >= 0, got {xi_prime}"
            )));
        }
        Ok(Self {
            xi_prime,
            norm_floor: default_norm_floor(),
        })
    }

    pub fn disabled() -> Self {
        Self {
            xi_prime: 0.0,
            norm_floor: default_norm_floor(),
        }
    }
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            xi_prime: 0.25,
            norm_floor: default_norm_floor(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LikelihoodGrad {
    /// Post-filtered denoiser output the residual was taken from.
    pub x_hat0: Vec<f64>,
    /// Gradient of `||y - m * x_hat0||^2` with respect to `x~`.
    pub grad: Vec<f64>,
    pub grad_norm: f64,
}

fn denoise_filtered(
    denoiser: &dyn Denoiser,
    post_filter: Option<&dyn PostFilter>,
    x: &[f64],
    sigma: f64,
) -> Result<Vec<f64>> {
    let d = denoiser.denoise(x, sigma)?;
    match post_filter {
        Some(p) => p.apply(&d),
        None => Ok(d),
    }
}

/// Gradient of the measurement residual through the mask, the post-filter
/// and the denoiser.
pub fn likelihood_grad(
    problem: &InpaintingProblem,
    denoiser: &dyn Denoiser,
    post_filter: Option<&dyn PostFilter>,
    x_tilde: &[f64],
    sigma: f64,
) -> Result<LikelihoodGrad> {
    check_len(problem.len(), x_tilde.len())?;
    let x_hat0 = denoise_filtered(denoiser, post_filter, x_tilde, sigma)?;
    check_len(problem.len(), x_hat0.len())?;
    // d/dx0 ||y - m x0||^2 = -2 m (y - m x0)
    let cot: Vec<f64> = problem
        .y
        .iter()
        .zip(&problem.mask)
        .zip(&x_hat0)
        .map(|((y, m), x)| -2.0 * m * (y - m * x))
        .collect();
    let cot = match post_filter {
        Some(p) => p.adjoint(&cot)?,
        None => cot,
    };
    let grad = denoiser.vjp(x_tilde, sigma, &cot)?;
    let grad_norm = norm(&grad);
    Ok(LikelihoodGrad {
        x_hat0,
        grad,
        grad_norm,
    })
}

/// `xi' sqrt(N) / (sigma * max(grad_norm, floor))`.
pub fn xi_scale(cfg: &GuidanceConfig, sigma: f64, grad_norm: f64, n: usize) -> f64 {
    cfg.xi_prime * (n as f64).sqrt() / (sigma * grad_norm.max(cfg.norm_floor))
}

/// Replacement with the smoothed mask. Samples with mask 1 or 0 take `y` or
/// `x_hat0` exactly.
pub fn data_consistency(problem: &InpaintingProblem, x_hat0: &[f64]) -> Result<Vec<f64>> {
    check_len(problem.len(), x_hat0.len())?;
    Ok(problem
        .mask_smooth
        .iter()
        .zip(&problem.y)
        .zip(x_hat0)
        .map(|((&s, &y), &x)| {
            if s == 1.0 {
                y
            } else if s == 0.0 {
                x
            } else {
                s * y + (1.0 - s) * x
            }
        })
        .collect())
}

/// Last pass on the sampler output: untouched observed samples are restored
/// to `y` exactly and fade regions are blended.
pub fn finalize(problem: &InpaintingProblem, x: &[f64]) -> Result<Vec<f64>> {
    data_consistency(problem, x)
}

/// Conditioned sampler. Returns the finalized output and the sampler trace.
pub fn inpaint(
    problem: &InpaintingProblem,
    denoiser: &dyn Denoiser,
    guidance: &GuidanceConfig,
    sampler: &SamplerConfig,
    post_filter: Option<&dyn PostFilter>,
) -> Result<SamplerOutput> {
    let n = problem.len();
    let guided = guidance.xi_prime > 0.0 && !problem.nothing_observed();
    let out = run_sampler(sampler, n, None, |x_tilde, sigma| {
        let x_hat0 = if guided {
            let lg = likelihood_grad(problem, denoiser, post_filter, x_tilde, sigma)?;
            let xi = xi_scale(guidance, sigma, lg.grad_norm, n);
            axpby(1.0, &lg.x_hat0, -sigma * sigma * xi, &lg.grad)
        } else {
            denoise_filtered(denoiser, post_filter, x_tilde, sigma)?
        };
        data_consistency(problem, &x_hat0)
    })?;
    Ok(SamplerOutput {
        x: finalize(problem, &out.x)?,
        trace: out.trace,
    })
}

/// Independent runs for each seed, in parallel, in seed order.
pub fn inpaint_many(
    problem: &InpaintingProblem,
    denoiser: &dyn Denoiser,
    guidance: &GuidanceConfig,
    sampler: &SamplerConfig,
    post_filter: Option<&dyn PostFilter>,
    seeds: &[u64],
) -> Result<Vec<Vec<f64>>> {
    seeds
        .par_iter()
        .map(|&s| {
            let cfg = sampler.clone().with_seed(s);
            inpaint(problem, denoiser, guidance, &cfg, post_filter).map(|o| o.x)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoisers::GaussianAnalyticDenoiser;
    use crate::diffusion::{sample_unconditional, NoiseSchedule};
    use crate::rng::SeededRng;
    use crate::vec_ops::dot;

    fn gap(start: usize, length: usize) -> Gap {
        Gap { start, length }
    }

    #[test]
    fn spec_validation() {
        assert!(GapSpec::new(vec![gap(10, 5), gap(12, 5)], 100).is_err());
        assert!(GapSpec::new(vec![gap(98, 5)], 100).is_err());
        let s = GapSpec::new(vec![gap(50, 5), gap(10, 5), gap(30, 0)], 100).unwrap();
        assert_eq!(s.gaps(), &[gap(10, 5), gap(50, 5)]);
    }

    #[test]
    fn equally_spaced_gaps() {
        let s = GapSpec::equally_spaced(800, 4, 20).unwrap();
        let starts: Vec<usize> = s.gaps().iter().map(|g| g.start).collect();
        assert_eq!(starts, vec![90, 290, 490, 690]);
    }

    #[test]
    fn json_round_trip_and_rate_check() {
        let text = r#"{"sample_rate": 44100, "gaps": [{"start_ms": 100.0, "length_ms": 10.0}]}"#;
        let f = GapSpecFile::from_json(text).unwrap();
        let s = f.to_spec(44100, 10000).unwrap();
        assert_eq!(s.gaps(), &[gap(4410, 441)]);
        assert!(f.to_spec(48000, 10000).is_err());
        assert!(GapSpecFile::from_json(r#"{"sample_rate": 1, "gaps": [], "x": 1}"#).is_err());
        let back = GapSpecFile::from_json(&GapSpecFile::from_spec(&s, 44100).to_json()).unwrap();
        assert_eq!(back.to_spec(44100, 10000).unwrap(), s);
    }

    #[test]
    fn no_gaps_problem() {
        let x: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let p = build_problem(&GapSpec::none(64), &x, 1.0, 8000.0).unwrap();
        assert_eq!(p.y, x);
        assert!(p.mask.iter().chain(&p.mask_smooth).all(|&v| v == 1.0));
    }

    #[test]
    fn fade_placement_at_cd_rate() {
        let spec = GapSpec::new(vec![gap(1000, 441)], 3000).unwrap();
        let p = build_problem(&spec, &vec![1.0; 3000], 1.0, 44100.0).unwrap();
        assert_eq!(p.fade_len, 44);
        let fading: Vec<usize> = (0..3000)
            .filter(|&i| p.mask_smooth[i] > 0.0 && p.mask_smooth[i] < 1.0)
            .collect();
        let expected: Vec<usize> = (956..1000).chain(1441..1485).collect();
        assert_eq!(fading, expected);
        assert!(p.mask_smooth[956..1000].windows(2).all(|w| w[0] > w[1]));
        assert!(p.mask_smooth[1441..1485].windows(2).all(|w| w[0] < w[1]));
        assert!((p.mask_smooth[999] - p.mask_smooth[1441]).abs() < 1e-15);
        assert!(p.mask[1000..1441].iter().all(|&m| m == 0.0));
        assert!(p.y[1000..1441].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn whole_signal_gap() {
        let spec = GapSpec::new(vec![gap(0, 32)], 32).unwrap();
        let p = build_problem(&spec, &[1.0; 32], 1.0, 8000.0).unwrap();
        assert!(p.mask.iter().chain(&p.y).all(|&v| v == 0.0));
        assert!(p.nothing_observed());
    }

    #[test]
    fn fade_collision_rejected() {
        let spec = GapSpec::new(vec![gap(100, 10), gap(120, 10)], 400).unwrap();
        assert!(build_problem(&spec, &[0.0; 400], 1.0, 8000.0).is_err());
        let ok = GapSpec::new(vec![gap(100, 10), gap(126, 10)], 400).unwrap();
        assert!(build_problem(&ok, &[0.0; 400], 1.0, 8000.0).is_ok());
    }

    #[test]
    fn xi_scale_examples() {
        let cfg = GuidanceConfig::new(1.0).unwrap();
        assert_eq!(xi_scale(&cfg, 1.0, 8.0, 64), 1.0);
        assert_eq!(xi_scale(&GuidanceConfig::disabled(), 1.0, 8.0, 64), 0.0);
        let a = xi_scale(&cfg, 0.3, 2.0, 64);
        assert!((xi_scale(&cfg, 0.6, 2.0, 64) - a / 2.0).abs() < 1e-15);
        assert!(xi_scale(&cfg, 1.0, 0.0, 64).is_finite());
    }

    fn ar_problem(n: usize, g: Gap, seed: u64) -> (GaussianAnalyticDenoiser, InpaintingProblem) {
        let d = GaussianAnalyticDenoiser::circular_ar1(n, 0.9, 0.25).unwrap();
        let x = d.sample_prior(&mut SeededRng::new(seed));
        let spec = GapSpec::new(vec![g], n).unwrap();
        let p = build_problem(&spec, &x, 1.0, 8000.0).unwrap();
        (d, p)
    }

    #[test]
    fn grad_vanishes_on_consistent_estimate() {
        // a denoiser at tiny sigma returns its input, so x~ = y makes r = 0
        let n = 64;
        let d = GaussianAnalyticDenoiser::white(n, 1.0).unwrap();
        let (_, p) = ar_problem(n, gap(20, 8), 1);
        let lg = likelihood_grad(&p, &d, None, &p.y, 1e-12).unwrap();
        assert!(lg.grad_norm < 1e-9);
    }

    #[test]
    fn grad_matches_finite_differences() {
        let n = 64;
        let (d, p) = ar_problem(n, gap(20, 8), 2);
        let mut rng = SeededRng::new(3);
        let x = rng.normals(n);
        let sigma = 0.3;
        let lg = likelihood_grad(&p, &d, None, &x, sigma).unwrap();
        let objective = |v: &[f64]| {
            let den = d.denoise(v, sigma).unwrap();
            p.y.iter()
                .zip(&p.mask)
                .zip(&den)
                .map(|((y, m), z)| (y - m * z).powi(2))
                .sum::<f64>()
        };
        let u = rng.normals(n);
        let h = 1e-5;
        let plus: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + h * b).collect();
        let minus: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a - h * b).collect();
        let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
        let an = dot(&lg.grad, &u);
        assert!((fd - an).abs() < 1e-6 * an.abs().max(1e-3), "{fd} vs {an}");
    }

    #[test]
    fn nothing_observed_gives_zero_grad() {
        let n = 32;
        let d = GaussianAnalyticDenoiser::white(n, 1.0).unwrap();
        let spec = GapSpec::new(vec![gap(0, n)], n).unwrap();
        let p = build_problem(&spec, &[1.0; 32], 1.0, 8000.0).unwrap();
        let lg = likelihood_grad(&p, &d, None, &SeededRng::new(4).normals(n), 0.5).unwrap();
        assert!(lg.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn data_consistency_endpoints() {
        let (_, p) = ar_problem(64, gap(20, 8), 5);
        let x0 = SeededRng::new(6).normals(64);
        let out = data_consistency(&p, &x0).unwrap();
        for i in 0..64 {
            let s = p.mask_smooth[i];
            if s == 1.0 {
                assert_eq!(out[i].to_bits(), p.y[i].to_bits());
            } else if s == 0.0 {
                assert_eq!(out[i].to_bits(), x0[i].to_bits());
            } else {
                let (lo, hi) = (p.y[i].min(x0[i]), p.y[i].max(x0[i]));
                assert!(out[i] >= lo - 1e-15 && out[i] <= hi + 1e-15);
            }
        }
    }

    #[test]
    fn no_gaps_returns_observation() {
        let n = 64;
        let d = GaussianAnalyticDenoiser::white(n, 1.0).unwrap();
        let x = SeededRng::new(7).normals(n);
        let p = build_problem(&GapSpec::none(n), &x, 1.0, 8000.0).unwrap();
        let cfg = SamplerConfig::new(NoiseSchedule::new(10, 1e-3, 1.0, 7.0, 1.0).unwrap(), 1);
        let out = inpaint(&p, &d, &GuidanceConfig::disabled(), &cfg, None).unwrap();
        assert_eq!(out.x, x);
    }

    #[test]
    fn whole_gap_equals_unconditional() {
        let n = 64;
        let d = GaussianAnalyticDenoiser::circular_ar1(n, 0.8, 0.25).unwrap();
        let spec = GapSpec::new(vec![gap(0, n)], n).unwrap();
        let p = build_problem(&spec, &vec![0.3; n], 1.0, 8000.0).unwrap();
        let cfg = SamplerConfig::new(NoiseSchedule::new(12, 1e-3, 1.0, 7.0, 2.0).unwrap(), 42);
        let a = inpaint(&p, &d, &GuidanceConfig::disabled(), &cfg, None).unwrap().x;
        let b = sample_unconditional(&cfg, &d, n, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn correction_norm_is_fixed_by_xi() {
        let n = 64;
        let (d, p) = ar_problem(n, gap(20, 8), 8);
        let cfg = GuidanceConfig::new(0.25).unwrap();
        let mut rng = SeededRng::new(9);
        for sigma in [0.01, 0.2, 0.9] {
            let x = rng.normals(n);
            let lg = likelihood_grad(&p, &d, None, &x, sigma).unwrap();
            let xi = xi_scale(&cfg, sigma, lg.grad_norm, n);
            let applied = sigma * sigma * xi * lg.grad_norm;
            let expected = sigma * 0.25 * (n as f64).sqrt();
            assert!((applied - expected).abs() < 1e-12 * expected);
        }
    }

    #[test]
    fn deterministic_and_parallel_consistent() {
        let n = 64;
        let (d, p) = ar_problem(n, gap(24, 10), 10);
        let cfg = SamplerConfig::new(NoiseSchedule::new(15, 1e-3, 1.0, 7.0, 2.0).unwrap(), 0);
        let g = GuidanceConfig::default();
        let a = inpaint(&p, &d, &g, &cfg.clone().with_seed(5), None).unwrap().x;
        let many = inpaint_many(&p, &d, &g, &cfg, None, &[4, 5]).unwrap();
        assert_eq!(a, many[1]);
        assert_ne!(many[0], many[1]);
        for ((v, y), ms) in a.iter().zip(&p.y).zip(&p.mask_smooth) {
            if *ms == 1.0 {
                assert_eq!(v.to_bits(), y.to_bits());
            }
        }
    }
}
