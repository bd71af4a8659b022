//! Autoregressive gap interpolation.
//!
//! Each gap is filled from a window of reliable context on both sides by
//! alternating two exact minimisations of the same objective
//!
//! ```text
//! J(a, x_gap) = sum_n (x[n] - sum_i a_i x[n - i])^2 + delta ||a||^2
//! ```
//!
//! over the window: a ridge least-squares AR fit with the signal fixed, then
//! a least-squares solve for the gap samples with the model fixed. `J` is
//! therefore non-increasing across iterations.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inpaint::{Gap, GapSpec};

/// Linear predictor `x[n] ~ sum_i a_i x[n - i]`, `i = 1..=p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArModel {
    pub coeffs: Vec<f64>,
    /// Order asked for; larger than `order()` after a degenerate fit.
    pub requested_order: usize,
}

impl ArModel {
    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    pub fn reduced(&self) -> bool {
        self.order() < self.requested_order
    }

    /// Prediction-error filter `[1, -a_1, ..., -a_p]`.
    pub fn error_filter(&self) -> Vec<f64> {
        std::iter::once(1.0).chain(self.coeffs.iter().map(|a| -a)).collect()
    }
}

/// Burg estimate of order `p`. Reflection coefficients stay inside the unit
/// disc, so the model is stable. The recursion stops early when the
/// remaining prediction error vanishes; an all-zero segment yields the
/// single coefficient 0.
pub fn ar_fit(x: &[f64], p: usize) -> Result<ArModel> {
    if p == 0 || x.len() <= 3 * p {
        return Err(Error::InvalidParams(format!(
            "AR order {p} needs more than {} samples, got {}",
            3 * p,
            x.len()
        )));
    }
    let n = x.len();
    let energy: f64 = x.iter().map(|v| v * v).sum();
    let mut err_filter = vec![1.0];
    let mut f = x.to_vec();
    let mut b = x.to_vec();
    for m in 0..p {
        let (mut num, mut den) = (0.0, 0.0);
        for t in m + 1..n {
            num += f[t] * b[t - 1];
            den += f[t] * f[t] + b[t - 1] * b[t - 1];
        }
        if !(den > 1e-14 * energy) || energy == 0.0 {
            break;
        }
        let k = -2.0 * num / den;
        let prev = err_filter.clone();
        err_filter.push(0.0);
        for i in 1..=m + 1 {
            err_filter[i] = prev.get(i).copied().unwrap_or(0.0) + k * prev[m + 1 - i];
        }
        for t in (m + 1..n).rev() {
            let (ft, bt) = (f[t], b[t - 1]);
            f[t] = ft + k * bt;
            b[t] = bt + k * ft;
        }
    }
    let mut coeffs: Vec<f64> = err_filter[1..].iter().map(|c| -c).collect();
    if coeffs.is_empty() {
        coeffs.push(0.0);
    }
    Ok(ArModel {
        coeffs,
        requested_order: p,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JanssenConfig {
    /// AR order; `None` picks `min(100, 3 * gap + 2)` capped by the context.
    pub order: Option<usize>,
    pub iterations: usize,
    /// Maximum reliable samples used on each side of a gap.
    pub context: usize,
    /// Ridge weight relative to the window energy.
    pub ridge: f64,
}

impl Default for JanssenConfig {
    fn default() -> Self {
        Self {
            order: None,
            iterations: 5,
            context: 2048,
            ridge: 1e-9,
        }
    }
}

impl JanssenConfig {
    pub fn with_order(mut self, p: usize) -> Self {
        self.order = Some(p);
        self
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn with_context(mut self, context: usize) -> Self {
        self.context = context;
        self
    }
}

#[derive(Debug, Clone)]
pub struct GapReport {
    pub gap: Gap,
    pub order: usize,
    /// Objective after each iteration.
    pub objective: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct JanssenOutput {
    pub x: Vec<f64>,
    pub gaps: Vec<GapReport>,
}

/// Fills every gap of `y`; samples outside gaps are copied unchanged.
pub fn janssen_inpaint(y: &[f64], spec: &GapSpec, cfg: &JanssenConfig) -> Result<JanssenOutput> {
    crate::error::check_len(spec.signal_length(), y.len())?;
    if cfg.iterations == 0 {
        return Err(Error::InvalidParams("at least one iteration is required".into()));
    }
    let gaps = spec.gaps();
    let windows: Vec<(usize, usize)> = gaps
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let lo = if i == 0 { 0 } else { gaps[i - 1].end() };
            let hi = gaps.get(i + 1).map_or(y.len(), |h| h.start);
            (g.start - (g.start - lo).min(cfg.context), g.end() + (hi - g.end()).min(cfg.context))
        })
        .collect();

    let filled: Vec<(Vec<f64>, GapReport)> = gaps
        .par_iter()
        .zip(&windows)
        .map(|(g, &(lo, hi))| fill_gap(&y[lo..hi], g.start - lo, *g, cfg))
        .collect::<Result<_>>()?;

    let mut x = y.to_vec();
    let mut reports = Vec::with_capacity(gaps.len());
    for (g, (vals, rep)) in gaps.iter().zip(filled) {
        x[g.start..g.end()].copy_from_slice(&vals);
        reports.push(rep);
    }
    Ok(JanssenOutput { x, gaps: reports })
}

fn fill_gap(window: &[f64], offset: usize, gap: Gap, cfg: &JanssenConfig) -> Result<(Vec<f64>, GapReport)> {
    let left = offset;
    let right = window.len() - offset - gap.length;
    let ctx = left.min(right);
    let p = cfg
        .order
        .unwrap_or_else(|| 100.min(3 * gap.length + 2).min(ctx / 3).max(1));
    if p == 0 || ctx < 3 * p {
        return Err(Error::InsufficientContext {
            start: gap.start,
            needed: 3 * p.max(1),
            available: ctx,
        });
    }

    let mut seg = window.to_vec();
    seg[offset..offset + gap.length].fill(0.0);
    let energy: f64 = seg.iter().map(|v| v * v).sum();
    let delta = cfg.ridge * energy.max(f64::MIN_POSITIVE);
    let mut objective = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let a = ls_ar_fit(&seg, p, delta)?;
        let filt = std::iter::once(1.0).chain(a.iter().map(|c| -c)).collect::<Vec<_>>();
        solve_missing(&mut seg, offset, gap.length, &filt)?;
        objective.push(residual_energy(&seg, &filt) + delta * a.iter().map(|c| c * c).sum::<f64>());
    }
    Ok((
        seg[offset..offset + gap.length].to_vec(),
        GapReport {
            gap,
            order: p,
            objective,
        },
    ))
}

/// Ridge least-squares predictor over rows `n = p..len`.
fn ls_ar_fit(x: &[f64], p: usize, delta: f64) -> Result<Vec<f64>> {
    let n = x.len();
    let mut r = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    for t in p..n {
        for i in 0..p {
            let xi = x[t - 1 - i];
            rhs[i] += xi * x[t];
            for j in 0..=i {
                r[(i, j)] += xi * x[t - 1 - j];
            }
        }
    }
    for i in 0..p {
        r[(i, i)] += delta;
        for j in 0..i {
            r[(j, i)] = r[(i, j)];
        }
    }
    let chol = r.cholesky().ok_or_else(|| {
        Error::InvalidParams("AR normal equations are not positive definite".into())
    })?;
    Ok(chol.solve(&rhs).iter().copied().collect())
}

fn residual_energy(x: &[f64], filt: &[f64]) -> f64 {
    let p = filt.len() - 1;
    (p..x.len())
        .map(|t| {
            let e: f64 = filt.iter().enumerate().map(|(i, c)| c * x[t - i]).sum();
            e * e
        })
        .sum()
}

/// Minimises the residual energy over `x[offset..offset + len]`. The normal
/// matrix is symmetric positive definite with bandwidth `p`.
fn solve_missing(x: &mut [f64], offset: usize, len: usize, filt: &[f64]) -> Result<()> {
    let p = filt.len() - 1;
    // band[i][d] = M[i][i - d], d = 0..=p
    let mut band = vec![vec![0.0; p + 1]; len];
    let mut rhs = vec![0.0; len];
    for t in p..x.len() {
        // rows whose stencil touches the gap
        if t < offset || t - p >= offset + len {
            continue;
        }
        let mut known = 0.0;
        for (i, c) in filt.iter().enumerate() {
            let s = t - i;
            if !(offset..offset + len).contains(&s) {
                known += c * x[s];
            }
        }
        for (i, ci) in filt.iter().enumerate() {
            let si = t - i;
            if !(offset..offset + len).contains(&si) {
                continue;
            }
            let ri = si - offset;
            rhs[ri] -= ci * known;
            for (j, cj) in filt.iter().enumerate().skip(i) {
                let sj = t - j;
                if !(offset..offset + len).contains(&sj) {
                    continue;
                }
                band[ri][j - i] += ci * cj;
            }
        }
    }
    let sol = banded_cholesky_solve(band, rhs)?;
    x[offset..offset + len].copy_from_slice(&sol);
    Ok(())
}

fn banded_cholesky_solve(mut band: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    let w = band.first().map_or(0, |r| r.len() - 1);
    // factor in place: band[i][d] becomes L[i][i - d]
    for i in 0..n {
        for d in (0..=w.min(i)).rev() {
            let j = i - d;
            let mut s = band[i][d];
            for k in 1..=w.min(j) {
                let dk = d + k;
                if dk <= w {
                    s -= band[i][dk] * band[j][k];
                }
            }
            if d == 0 {
                if !(s > 0.0) {
                    return Err(Error::InvalidParams(
                        "gap normal equations are not positive definite".into(),
                    ));
                }
                band[i][0] = s.sqrt();
            } else {
                band[i][d] = s / band[j][0];
            }
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for d in 1..=w.min(i) {
            s -= band[i][d] * b[i - d];
        }
        b[i] = s / band[i][0];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for d in 1..=w.min(n - 1 - i) {
            s -= band[i + d][d] * b[i + d];
        }
        b[i] = s / band[i][0];
    }
    Ok(b)
}
