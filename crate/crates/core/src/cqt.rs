//! Invertible constant-Q transform assembled from octave-wise non-stationary
//! Gabor sub-transforms.
//!
//! Every filter lives in the frequency domain as a set of non-negative weights
//! over the DFT bins of the full signal. Filter `q` (0-based) is centred at
//! `f_min * 2^(q / B)`. Its shape, in log-frequency measured in bin spacings,
//! is flat over `|d| <= (1 - a) / 2` and falls to zero along a raised-cosine
//! taper ending at `|d| = (1 + a) / 2`, where `a` is [`CqtParams::transition`].
//! Neighbouring filters cross at their -6 dB points and their amplitudes sum
//! to one. `a = 1` gives plain Hann windows spanning two bin spacings.
//!
//! All bins of one octave share a hop size. Going down one octave doubles the
//! hop, so the frame count halves. Every filter's support fits inside its
//! octave's frame count. This is the painless case, where the frame operator
//! is diagonal in the DFT basis and the canonical dual is a division by it.
//!
//! Analysis of bin `k` in an octave with `M` frames:
//!
//! ```text
//! c_k[m] = 1/N * sum_nu X[nu] g_k[nu] exp(2 pi i nu m / M)
//! ```
//!
//! Only positive frequencies are analysed. Synthesis takes the real part, so
//! the transform pair acts on real signals.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Default raised-cosine transition width, as a fraction of one bin spacing.
pub const DEFAULT_TRANSITION: f64 = 0.1;

/// Bins whose frame-operator value falls below this fraction of the maximum
/// are treated as uncovered.
const COVERAGE_FLOOR: f64 = 1e-10;

/// Geometry of the transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CqtParams {
    pub sample_rate: f64,
    pub bins_per_octave: usize,
    pub num_octaves: usize,
    /// Centre frequency of the lowest filter, in Hz.
    pub f_min: f64,
    pub signal_length: usize,
    #[serde(default = "default_transition")]
    pub transition: f64,
}

fn default_transition() -> f64 {
    DEFAULT_TRANSITION
}

impl CqtParams {
    /// Parameters with `f_min` chosen so the top octave ends at Nyquist.
    pub fn new(
        sample_rate: f64,
        bins_per_octave: usize,
        num_octaves: usize,
        signal_length: usize,
    ) -> Self {
        Self {
            sample_rate,
            bins_per_octave,
            num_octaves,
            f_min: sample_rate / 2f64.powi(num_octaves as i32 + 1),
            signal_length,
            transition: DEFAULT_TRANSITION,
        }
    }

    /// 44.1 kHz, 64 bins per octave, 8 octaves.
    pub fn reference(signal_length: usize) -> Self {
        Self::new(44_100.0, 64, 8, signal_length)
    }

    pub fn with_f_min(mut self, f_min: f64) -> Self {
        self.f_min = f_min;
        self
    }

    pub fn with_transition(mut self, transition: f64) -> Self {
        self.transition = transition;
        self
    }

    pub fn with_signal_length(mut self, signal_length: usize) -> Self {
        self.signal_length = signal_length;
        self
    }

    pub fn num_bins(&self) -> usize {
        self.bins_per_octave * self.num_octaves
    }

    /// Centre frequency of 0-based bin `q`.
    pub fn center_frequency(&self, q: usize) -> f64 {
        self.f_min * 2f64.powf(q as f64 / self.bins_per_octave as f64)
    }

    /// Lower and upper support edges (Hz) of 0-based bin `q`.
    pub fn support_edges(&self, q: usize) -> (f64, f64) {
        let half = (1.0 + self.transition) / (2.0 * self.bins_per_octave as f64);
        let fc = self.center_frequency(q);
        (fc * 2f64.powf(-half), fc * 2f64.powf(half))
    }

    /// Hop of the highest octave. Independent of the signal length: the
    /// widest filter of that octave must fit in `sample_rate / hop` Hz.
    pub fn top_hop(&self) -> Result<usize> {
        self.validate_shape()?;
        let (lo, hi) = self.support_edges(self.num_bins() - 1);
        let hop = (self.sample_rate / (hi - lo)).floor();
        if hop < 1.0 {
            return Err(Error::InvalidParams(format!(
                "top filter is wider ({:.1} Hz) than the sample rate allows",
                hi - lo
            )));
        }
        Ok(hop as usize)
    }

    /// Hop of 0-based octave `octave` (0 is the lowest).
    pub fn hop(&self, octave: usize) -> Result<usize> {
        Ok(self.top_hop()? << (self.num_octaves - 1 - octave))
    }

    /// Signal lengths must be a multiple of this.
    pub fn length_multiple(&self) -> Result<usize> {
        self.hop(0)
    }

    /// Smallest valid length that is at least `length`.
    pub fn padded_length(&self, length: usize) -> Result<usize> {
        let m = self.length_multiple()?;
        Ok(length.max(1).div_ceil(m) * m)
    }

    fn validate_shape(&self) -> Result<()> {
        if self.bins_per_octave < 1 || self.num_octaves < 1 {
            return Err(Error::InvalidParams(
                "bins_per_octave and num_octaves must be at least 1".into(),
            ));
        }
        if !(self.sample_rate > 0.0) || !(self.f_min > 0.0) {
            return Err(Error::InvalidParams(
                "sample_rate and f_min must be positive".into(),
            ));
        }
        if !(self.transition > 0.0 && self.transition <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "transition must lie in (0, 1], got {}",
                self.transition
            )));
        }
        let top = self.f_min * 2f64.powi(self.num_octaves as i32);
        if top > self.sample_rate / 2.0 * (1.0 + 1e-12) {
            return Err(Error::InvalidParams(format!(
                "f_min * 2^num_octaves = {top:.3} Hz exceeds Nyquist ({:.3} Hz)",
                self.sample_rate / 2.0
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_shape()?;
        let multiple = self.length_multiple()?;
        if self.signal_length == 0 || !self.signal_length.is_multiple_of(multiple) {
            return Err(Error::NeedsPadding {
                length: self.signal_length,
                multiple,
                padded: self.padded_length(self.signal_length)?,
            });
        }
        Ok(())
    }
}

/// Frequency-domain weights of one filter over a contiguous run of DFT bins.
#[derive(Debug, Clone)]
pub struct BandWindow {
    /// First DFT bin of the support.
    pub start: usize,
    pub weights: Vec<f64>,
}

impl BandWindow {
    pub fn bins(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .map(move |(i, &w)| (self.start + i, w))
    }
}

#[derive(Clone)]
struct OctaveGeometry {
    hop: usize,
    frames: usize,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

/// Precomputed filter bank, duals and framing for one signal length.
#[derive(Clone)]
pub struct CqtPlan {
    params: CqtParams,
    filters: Vec<BandWindow>,
    duals: Vec<BandWindow>,
    /// Filters scaled for the adjoint synthesis (1/2 below Nyquist, 1 at Nyquist).
    adjoint_windows: Vec<BandWindow>,
    octaves: Vec<OctaveGeometry>,
    /// Diagonal of the frame operator over bins `0..=N/2`.
    frame_diag: Vec<f64>,
    /// Aggregate response `sum_k M_k g_k dual_k / N`, one or zero per bin.
    coverage: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for CqtPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CqtPlan")
            .field("params", &self.params)
            .field("hops", &self.hops())
            .field("frames", &self.frames())
            .finish_non_exhaustive()
    }
}

fn taper(d: f64, transition: f64) -> f64 {
    let d = d.abs();
    let inner = (1.0 - transition) / 2.0;
    let outer = (1.0 + transition) / 2.0;
    if d <= inner {
        1.0
    } else if d >= outer {
        0.0
    } else {
        0.5 * (1.0 + (std::f64::consts::PI * (d - inner) / transition).cos())
    }
}

/// Builds the plan. Rejects parameters above Nyquist and lengths that are not
/// a multiple of [`CqtParams::length_multiple`].
pub fn plan_cqt(params: CqtParams) -> Result<CqtPlan> {
    params.validate()?;
    let n = params.signal_length;
    let half = n / 2;
    let b = params.bins_per_octave;
    let top_hop = params.top_hop()?;
    let mut planner = FftPlanner::<f64>::new();

    let octaves: Vec<OctaveGeometry> = (0..params.num_octaves)
        .map(|o| {
            let hop = top_hop << (params.num_octaves - 1 - o);
            let frames = n / hop;
            OctaveGeometry {
                hop,
                frames,
                fft: planner.plan_fft_forward(frames),
                ifft: planner.plan_fft_inverse(frames),
            }
        })
        .collect();

    let bin_hz = params.sample_rate / n as f64;
    let log_fmin = params.f_min.log2();
    let mut filters = Vec::with_capacity(params.num_bins());
    for q in 0..params.num_bins() {
        let (lo, hi) = params.support_edges(q);
        let first = ((lo / bin_hz).floor() as usize + 1).max(1);
        let last = ((hi / bin_hz).ceil() as usize).min(half);
        let mut start = first;
        let mut weights: Vec<f64> = if last >= first {
            (first..=last)
                .map(|nu| {
                    let f = nu as f64 * bin_hz;
                    let d = (f.log2() - log_fmin) * b as f64 - q as f64;
                    taper(d, params.transition)
                })
                .collect()
        } else {
            Vec::new()
        };
        // trim zero weights at both ends
        while weights.last() == Some(&0.0) {
            weights.pop();
        }
        let lead = weights.iter().take_while(|&&w| w == 0.0).count();
        weights.drain(..lead);
        start += lead;
        let frames = octaves[q / b].frames;
        if weights.len() > frames {
            return Err(Error::InvalidParams(format!(
                "filter {q} spans {} DFT bins but its octave has only {frames} frames",
                weights.len()
            )));
        }
        filters.push(BandWindow { start, weights });
    }

    let nyquist = n.is_multiple_of(2).then_some(half);
    let kappa = |nu: usize| if Some(nu) == nyquist { 1.0 } else { 0.5 };

    let mut frame_diag = vec![0.0; half + 1];
    for (q, filt) in filters.iter().enumerate() {
        let m = octaves[q / b].frames as f64;
        for (nu, w) in filt.bins() {
            frame_diag[nu] += m * w * w;
        }
    }
    for (nu, s) in frame_diag.iter_mut().enumerate() {
        *s *= kappa(nu) / n as f64;
    }
    let s_max = frame_diag.iter().cloned().fold(0.0, f64::max);
    if s_max <= 0.0 {
        return Err(Error::InvalidParams(
            "no DFT bin falls inside the filter bank; signal too short".into(),
        ));
    }
    let floor = s_max * COVERAGE_FLOOR;

    let duals: Vec<BandWindow> = filters
        .iter()
        .map(|filt| BandWindow {
            start: filt.start,
            weights: filt
                .bins()
                .map(|(nu, w)| {
                    let s = frame_diag[nu];
                    if s > floor {
                        w * kappa(nu) / s
                    } else {
                        0.0
                    }
                })
                .collect(),
        })
        .collect();
    let adjoint_windows = filters
        .iter()
        .map(|filt| BandWindow {
            start: filt.start,
            weights: filt.bins().map(|(nu, w)| w * kappa(nu)).collect(),
        })
        .collect();

    let mut coverage = vec![0.0; half + 1];
    for (q, (filt, dual)) in filters.iter().zip(&duals).enumerate() {
        let m = octaves[q / b].frames as f64;
        for ((nu, w), &d) in filt.bins().zip(&dual.weights) {
            coverage[nu] += m * w * d;
        }
    }
    for c in coverage.iter_mut() {
        *c /= n as f64;
    }

    Ok(CqtPlan {
        params,
        filters,
        duals,
        adjoint_windows,
        octaves,
        frame_diag,
        coverage,
        fft: planner.plan_fft_forward(n),
        ifft: planner.plan_fft_inverse(n),
    })
}

/// Complex coefficients, one block per octave, lowest octave first.
#[derive(Debug, Clone, PartialEq)]
pub struct OctaveCoeffs {
    pub params: CqtParams,
    pub octaves: Vec<OctaveBlock>,
}

/// Row-major `bins x frames` matrix of one octave.
#[derive(Debug, Clone, PartialEq)]
pub struct OctaveBlock {
    pub bins: usize,
    pub frames: usize,
    pub hop: usize,
    pub data: Vec<Complex64>,
}

impl OctaveBlock {
    pub fn row(&self, bin: usize) -> &[Complex64] {
        &self.data[bin * self.frames..(bin + 1) * self.frames]
    }

    pub fn row_mut(&mut self, bin: usize) -> &mut [Complex64] {
        &mut self.data[bin * self.frames..(bin + 1) * self.frames]
    }
}

impl OctaveCoeffs {
    pub fn zeros(plan: &CqtPlan) -> Self {
        let b = plan.params.bins_per_octave;
        Self {
            params: plan.params,
            octaves: plan
                .octaves
                .iter()
                .map(|o| OctaveBlock {
                    bins: b,
                    frames: o.frames,
                    hop: o.hop,
                    data: vec![Complex64::new(0.0, 0.0); b * o.frames],
                })
                .collect(),
        }
    }

    pub fn num_coefficients(&self) -> usize {
        self.octaves.iter().map(|o| o.data.len()).sum()
    }

    /// Row of global 0-based bin `q`.
    pub fn bin(&self, q: usize) -> &[Complex64] {
        let b = self.params.bins_per_octave;
        self.octaves[q / b].row(q % b)
    }

    pub fn bin_mut(&mut self, q: usize) -> &mut [Complex64] {
        let b = self.params.bins_per_octave;
        self.octaves[q / b].row_mut(q % b)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Complex64> {
        self.octaves.iter().flat_map(|o| o.data.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Complex64> {
        self.octaves.iter_mut().flat_map(|o| o.data.iter_mut())
    }

    /// Real inner product on the interleaved real/imaginary representation.
    pub fn dot(&self, other: &Self) -> f64 {
        self.iter()
            .zip(other.iter())
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Multiplies every frame of bin `q` by `gains[q]`.
    pub fn scale_bins(&mut self, gains: &[f64]) {
        let b = self.params.bins_per_octave;
        for (o, block) in self.octaves.iter_mut().enumerate() {
            for (r, row) in block.data.chunks_mut(block.frames).enumerate() {
                let g = gains[o * b + r];
                row.iter_mut().for_each(|c| *c *= g);
            }
        }
    }

    /// Mean power `|c|^2` per bin, averaged over that bin's frames.
    pub fn bin_power(&self) -> Vec<f64> {
        self.octaves
            .iter()
            .flat_map(|o| {
                o.data
                    .chunks(o.frames)
                    .map(move |row| row.iter().map(|c| c.norm_sqr()).sum::<f64>() / o.frames as f64)
            })
            .collect()
    }

    pub fn to_interleaved(&self) -> Vec<f64> {
        self.iter().flat_map(|c| [c.re, c.im]).collect()
    }

    pub fn from_interleaved(plan: &CqtPlan, values: &[f64]) -> Result<Self> {
        let mut out = Self::zeros(plan);
        let expected = 2 * out.num_coefficients();
        if values.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "expected {expected} interleaved values, got {}",
                values.len()
            )));
        }
        for (c, pair) in out.iter_mut().zip(values.chunks_exact(2)) {
            *c = Complex64::new(pair[0], pair[1]);
        }
        Ok(out)
    }

    /// Writes one octave as CSV: a `#` header line with the geometry, then one
    /// row per bin and one column per frame, magnitude in dB.
    pub fn write_octave_csv<W: Write>(&self, octave: usize, mut out: W) -> Result<()> {
        let p = &self.params;
        let block = self
            .octaves
            .get(octave)
            .ok_or_else(|| Error::ShapeMismatch(format!("no octave {octave}")))?;
        writeln!(
            out,
            "# octave={octave} sample_rate={} bins_per_octave={} num_octaves={} f_min={} signal_length={} transition={} hop={} frames={}",
            p.sample_rate, p.bins_per_octave, p.num_octaves, p.f_min, p.signal_length, p.transition, block.hop, block.frames
        )?;
        for row in block.data.chunks(block.frames) {
            let line = row
                .iter()
                .map(|c| format!("{:.3}", 20.0 * (c.norm() + 1e-12).log10()))
                .collect::<Vec<_>>()
                .join(",");
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

impl CqtPlan {
    pub fn params(&self) -> &CqtParams {
        &self.params
    }

    pub fn signal_length(&self) -> usize {
        self.params.signal_length
    }

    pub fn num_bins(&self) -> usize {
        self.filters.len()
    }

    pub fn filters(&self) -> &[BandWindow] {
        &self.filters
    }

    pub fn duals(&self) -> &[BandWindow] {
        &self.duals
    }

    /// Per-octave hop in samples, lowest octave first.
    pub fn hops(&self) -> Vec<usize> {
        self.octaves.iter().map(|o| o.hop).collect()
    }

    /// Per-octave frame count, lowest octave first.
    pub fn frames(&self) -> Vec<usize> {
        self.octaves.iter().map(|o| o.frames).collect()
    }

    pub fn center_frequencies(&self) -> Vec<f64> {
        (0..self.num_bins())
            .map(|q| self.params.center_frequency(q))
            .collect()
    }

    /// Frame operator diagonal over DFT bins `0..=N/2`.
    pub fn frame_operator(&self) -> &[f64] {
        &self.frame_diag
    }

    /// Aggregate response of analysis followed by dual synthesis, per DFT bin
    /// `0..=N/2`: one on the covered band, zero elsewhere.
    pub fn coverage(&self) -> &[f64] {
        &self.coverage
    }

    fn spectrum(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.process(&mut buf);
        buf
    }

    /// Real signal from the positive-frequency half spectrum `half[0..=N/2]`
    /// of a real signal's DFT.
    fn real_from_half_spectrum(&self, half: &[Complex64]) -> Vec<f64> {
        let n = self.params.signal_length;
        let mut full = vec![Complex64::new(0.0, 0.0); n];
        full[0] = Complex64::new(half[0].re, 0.0);
        for nu in 1..half.len() {
            full[nu] = half[nu];
            if n - nu != nu {
                full[n - nu] = half[nu].conj();
            } else {
                full[nu] = Complex64::new(half[nu].re, 0.0);
            }
        }
        self.ifft.process(&mut full);
        full.iter().map(|c| c.re / n as f64).collect()
    }

    /// Analysis: linear in `x`.
    pub fn forward(&self, x: &[f64]) -> Result<OctaveCoeffs> {
        check_len(self.params.signal_length, x.len())?;
        let spec = self.spectrum(x);
        let n = self.params.signal_length as f64;
        let b = self.params.bins_per_octave;
        let rows: Vec<Vec<Complex64>> = self
            .filters
            .par_iter()
            .enumerate()
            .map(|(q, filt)| {
                let geo = &self.octaves[q / b];
                let mut buf = vec![Complex64::new(0.0, 0.0); geo.frames];
                for (nu, w) in filt.bins() {
                    buf[nu % geo.frames] += spec[nu] * (w / n);
                }
                geo.ifft.process(&mut buf);
                buf
            })
            .collect();
        let mut out = OctaveCoeffs::zeros(self);
        for (q, row) in rows.into_iter().enumerate() {
            out.bin_mut(q).copy_from_slice(&row);
        }
        Ok(out)
    }

    fn check_shape(&self, c: &OctaveCoeffs) -> Result<()> {
        let ok = c.octaves.len() == self.octaves.len()
            && c
                .octaves
                .iter()
                .zip(&self.octaves)
                .all(|(blk, geo)| {
                    blk.frames == geo.frames
                        && blk.bins == self.params.bins_per_octave
                        && blk.data.len() == blk.bins * blk.frames
                });
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "plan frames {:?}, coefficients frames {:?}",
                self.frames(),
                c.octaves.iter().map(|o| o.frames).collect::<Vec<_>>()
            )))
        }
    }

    /// Half spectrum of `sum_k window_k * FFT_M(c_k)`, accumulated in bin order.
    fn synthesize_half(&self, c: &OctaveCoeffs, windows: &[BandWindow]) -> Vec<Complex64> {
        let b = self.params.bins_per_octave;
        let per_bin: Vec<Vec<Complex64>> = (0..self.num_bins())
            .into_par_iter()
            .map(|q| {
                let geo = &self.octaves[q / b];
                let mut buf = c.bin(q).to_vec();
                geo.fft.process(&mut buf);
                buf
            })
            .collect();
        let mut half = vec![Complex64::new(0.0, 0.0); self.params.signal_length / 2 + 1];
        for (q, (win, coeffs)) in windows.iter().zip(&per_bin).enumerate() {
            let frames = self.octaves[q / b].frames;
            for (nu, w) in win.bins() {
                half[nu] += coeffs[nu % frames] * w;
            }
        }
        half
    }

    /// Synthesis with the canonical dual windows. `inverse(forward(x))`
    /// equals [`CqtPlan::dc_notch`] of `x`.
    pub fn inverse(&self, c: &OctaveCoeffs) -> Result<Vec<f64>> {
        self.check_shape(c)?;
        let half = self.synthesize_half(c, &self.duals);
        Ok(self.real_from_half_spectrum(&half))
    }

    /// Adjoint of [`CqtPlan::forward`] under the real inner product.
    pub fn adjoint(&self, c: &OctaveCoeffs) -> Result<Vec<f64>> {
        self.check_shape(c)?;
        let half = self.synthesize_half(c, &self.adjoint_windows);
        Ok(self.real_from_half_spectrum(&half))
    }

    /// Multiplies the spectrum of `x` by `f(frame_diag)` per bin, zero off
    /// the covered band.
    fn spectral_multiply(&self, x: &[f64], gain: impl Fn(usize) -> f64) -> Result<Vec<f64>> {
        check_len(self.params.signal_length, x.len())?;
        let spec = self.spectrum(x);
        let half: Vec<Complex64> = (0..=self.params.signal_length / 2)
            .map(|nu| spec[nu] * gain(nu))
            .collect();
        Ok(self.real_from_half_spectrum(&half))
    }

    /// Removes everything outside the band covered by the filters: DC, the
    /// region under the lowest filter and the sliver above the highest.
    /// A projection, hence idempotent and self-adjoint.
    pub fn dc_notch(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.spectral_multiply(x, |nu| self.coverage[nu])
    }

    /// Pseudo-inverse of the frame operator. With it,
    /// `inverse(c) = frame_inverse(adjoint(c))`.
    pub fn frame_inverse(&self, x: &[f64]) -> Result<Vec<f64>> {
        let floor = self.frame_diag.iter().cloned().fold(0.0, f64::max) * COVERAGE_FLOOR;
        self.spectral_multiply(x, |nu| {
            let s = self.frame_diag[nu];
            if s > floor {
                1.0 / s
            } else {
                0.0
            }
        })
    }

    /// `||inverse(c restricted to bin q)||^2` for every bin `q`, without
    /// running a full synthesis per bin.
    pub fn per_bin_synthesis_energy(&self, c: &OctaveCoeffs) -> Result<Vec<f64>> {
        self.check_shape(c)?;
        let n = self.params.signal_length;
        let b = self.params.bins_per_octave;
        Ok((0..self.num_bins())
            .into_par_iter()
            .map(|q| {
                let geo = &self.octaves[q / b];
                let mut buf = c.bin(q).to_vec();
                geo.fft.process(&mut buf);
                let mut acc = 0.0;
                for (nu, w) in self.duals[q].bins() {
                    let v = buf[nu % geo.frames] * w;
                    // self-conjugate bins keep only the real part, once
                    acc += if nu == 0 || 2 * nu == n {
                        v.re * v.re
                    } else {
                        2.0 * v.norm_sqr()
                    };
                }
                acc / n as f64
            })
            .collect())
    }

    /// `2 * total complex coefficients / N`.
    pub fn redundancy(&self) -> f64 {
        coefficient_redundancy(
            self.params.bins_per_octave,
            &self.frames(),
            self.params.signal_length,
        )
    }

    /// Redundancy if every octave used the finest hop, for comparison.
    pub fn rasterized_redundancy(&self) -> f64 {
        let top = *self.octaves.last().map(|o| &o.frames).unwrap_or(&0);
        coefficient_redundancy(
            self.params.bins_per_octave,
            &vec![top; self.octaves.len()],
            self.params.signal_length,
        )
    }
}

/// Real numbers stored per input sample for `bins_per_octave` bins in each
/// octave with the given frame counts.
pub fn coefficient_redundancy(bins_per_octave: usize, frames: &[usize], n: usize) -> f64 {
    let complex: usize = frames.iter().map(|f| f * bins_per_octave).sum();
    2.0 * complex as f64 / n as f64
}

pub fn cqt_forward(plan: &CqtPlan, x: &[f64]) -> Result<OctaveCoeffs> {
    plan.forward(x)
}

pub fn cqt_inverse(plan: &CqtPlan, c: &OctaveCoeffs) -> Result<Vec<f64>> {
    plan.inverse(c)
}

pub fn dc_notch(plan: &CqtPlan, x: &[f64]) -> Result<Vec<f64>> {
    plan.dc_notch(x)
}

pub fn redundancy(plan: &CqtPlan) -> f64 {
    plan.redundancy()
}
