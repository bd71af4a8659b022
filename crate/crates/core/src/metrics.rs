//! Objective metrics: SNR over an optional region and log-spectral distance.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_len, Error, Result};
use crate::inpaint::GapSpec;

pub const LSD_FRAME: usize = 2048;
pub const LSD_HOP: usize = 512;
pub const LSD_EPS: f64 = 1e-8;

/// A decibel value. Serializes infinities as the strings `"inf"` and
/// `"-inf"` since JSON has no literal for them.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Db(pub f64);

impl Db {
    pub fn is_perfect(&self) -> bool {
        self.0 == f64::INFINITY
    }
}

impl fmt::Display for Db {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            write!(f, "{}", if self.0 > 0.0 { "inf" } else { "-inf" })
        } else {
            write!(f, "{:.4}", self.0)
        }
    }
}

impl Serialize for Db {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str(if self.0 > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Db {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Db;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number, \"inf\" or \"-inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Db, E> {
                Ok(Db(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Db, E> {
                Ok(Db(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Db, E> {
                Ok(Db(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Db, E> {
                match v {
                    "inf" => Ok(Db(f64::INFINITY)),
                    "-inf" => Ok(Db(f64::NEG_INFINITY)),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// `10 log10(sum ref^2 / sum (ref - est)^2)` over `region` (everything when
/// `None`). Identical signals give `+inf`.
pub fn snr(reference: &[f64], estimate: &[f64], region: Option<&[bool]>) -> Result<f64> {
    check_len(reference.len(), estimate.len())?;
    if let Some(r) = region {
        check_len(reference.len(), r.len())?;
    }
    let (mut sig, mut err) = (0.0, 0.0);
    for (i, (a, b)) in reference.iter().zip(estimate).enumerate() {
        if region.is_none_or(|r| r[i]) {
            sig += a * a;
            err += (a - b) * (a - b);
        }
    }
    if sig == 0.0 {
        return Err(Error::ZeroEnergyReference);
    }
    Ok(if err == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (sig / err).log10()
    })
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Magnitude STFT with the LSD framing, one row per frame, bins `0..=F/2`.
pub fn stft_magnitude(x: &[f64]) -> Result<Vec<Vec<f64>>> {
    if x.len() < LSD_FRAME {
        return Err(Error::SignalTooShort {
            length: x.len(),
            frame: LSD_FRAME,
        });
    }
    let win = hann(LSD_FRAME);
    let fft = FftPlanner::new().plan_fft_forward(LSD_FRAME);
    let frames = 1 + (x.len() - LSD_FRAME) / LSD_HOP;
    Ok((0..frames)
        .map(|f| {
            let start = f * LSD_HOP;
            let mut buf: Vec<Complex64> = x[start..start + LSD_FRAME]
                .iter()
                .zip(&win)
                .map(|(v, w)| Complex64::new(v * w, 0.0))
                .collect();
            fft.process(&mut buf);
            buf[..=LSD_FRAME / 2].iter().map(|c| c.norm()).collect()
        })
        .collect())
}

/// Frame-averaged RMS difference of log magnitude spectra, in dB.
pub fn lsd(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    check_len(reference.len(), estimate.len())?;
    let a = stft_magnitude(reference)?;
    let b = stft_magnitude(estimate)?;
    let per_frame: f64 = a
        .iter()
        .zip(&b)
        .map(|(fa, fb)| {
            let ms: f64 = fa
                .iter()
                .zip(fb)
                .map(|(x, y)| {
                    let d = 20.0 * (x + LSD_EPS).log10() - 20.0 * (y + LSD_EPS).log10();
                    d * d
                })
                .sum::<f64>()
                / fa.len() as f64;
            ms.sqrt()
        })
        .sum();
    Ok(per_frame / a.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapMetric {
    pub start: usize,
    pub length: usize,
    /// `None` when the reference is silent over the gap.
    pub snr: Option<Db>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub snr_full: Db,
    /// Over all gap samples together; `None` without gaps or when the
    /// reference is silent there.
    pub snr_gaps: Option<Db>,
    /// `None` when the signal is shorter than one analysis frame.
    pub lsd: Option<f64>,
    pub gaps: Vec<GapMetric>,
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    /// Two-column CSV `metric,value` with one row per gap.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let opt = |d: Option<Db>| d.map_or_else(String::new, |v| v.to_string());
        writeln!(out, "metric,value")?;
        writeln!(out, "snr_full,{}", self.snr_full)?;
        writeln!(out, "snr_gaps,{}", opt(self.snr_gaps))?;
        writeln!(out, "lsd,{}", self.lsd.map_or_else(String::new, |v| format!("{v:.6}")))?;
        for g in &self.gaps {
            writeln!(out, "snr_gap_{}_{},{}", g.start, g.length, opt(g.snr))?;
        }
        Ok(())
    }
}

fn optional(r: Result<f64>) -> Result<Option<Db>> {
    match r {
        Ok(v) => Ok(Some(Db(v))),
        Err(Error::ZeroEnergyReference) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Full-signal, gaps-only and per-gap SNR plus LSD.
pub fn evaluate(reference: &[f64], estimate: &[f64], spec: &GapSpec) -> Result<MetricReport> {
    check_len(reference.len(), estimate.len())?;
    check_len(spec.signal_length(), reference.len())?;
    let snr_full = Db(snr(reference, estimate, None)?);
    let snr_gaps = if spec.is_empty() {
        None
    } else {
        optional(snr(reference, estimate, Some(&spec.gap_region())))?
    };
    let gaps = spec
        .gaps()
        .iter()
        .map(|g| {
            let r = g.start..g.end();
            Ok(GapMetric {
                start: g.start,
                length: g.length,
                snr: optional(snr(&reference[r.clone()], &estimate[r], None))?,
            })
        })
        .collect::<Result<_>>()?;
    let lsd = match lsd(reference, estimate) {
        Ok(v) => Some(v),
        Err(Error::SignalTooShort { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricReport {
        snr_full,
        snr_gaps,
        lsd,
        gaps,
    })
}

/// Magnitude spectrogram in dB as CSV: rows are frequency bins, columns are
/// frames, preceded by a `#` header with the framing.
pub fn write_spectrogram_csv<W: Write>(x: &[f64], sample_rate: f64, mut out: W) -> Result<()> {
    let mag = stft_magnitude(x)?;
    writeln!(
        out,
        "# frame={LSD_FRAME} hop={LSD_HOP} window=hann sample_rate={sample_rate} rows=bins cols=frames"
    )?;
    for k in 0..=LSD_FRAME / 2 {
        let row: Vec<String> = mag
            .iter()
            .map(|f| format!("{:.3}", 20.0 * (f[k] + LSD_EPS).log10()))
            .collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inpaint::Gap;
    use crate::rng::SeededRng;

    #[test]
    fn snr_examples() {
        let x = SeededRng::new(1).normals(1000);
        assert_eq!(snr(&x, &x, None).unwrap(), f64::INFINITY);
        assert!(snr(&x, &[0.0; 1000], None).unwrap().abs() < 1e-12);
        assert!(matches!(snr(&[0.0; 4], &[1.0; 4], None), Err(Error::ZeroEnergyReference)));
        assert!(snr(&x, &x[1..], None).is_err());
    }

    #[test]
    fn snr_twenty_db() {
        let x = SeededRng::new(2).normals(1000);
        let e = SeededRng::new(3).normals(1000);
        let (ex, ee): (f64, f64) = (x.iter().map(|v| v * v).sum(), e.iter().map(|v| v * v).sum());
        let k = (ex / (100.0 * ee)).sqrt();
        let est: Vec<f64> = x.iter().zip(&e).map(|(a, b)| a + k * b).collect();
        assert!((snr(&x, &est, None).unwrap() - 20.0).abs() < 0.1);
    }

    #[test]
    fn lsd_examples() {
        let x = SeededRng::new(4).normals(8192);
        assert_eq!(lsd(&x, &x).unwrap(), 0.0);
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        assert!((lsd(&x, &y).unwrap() - 20.0 * 2f64.log10()).abs() < 1e-3);
        let z = SeededRng::new(5).normals(8192);
        assert_eq!(lsd(&x, &z).unwrap(), lsd(&z, &x).unwrap());
        assert!(matches!(lsd(&[0.0; 100], &[0.0; 100]), Err(Error::SignalTooShort { .. })));
    }

    #[test]
    fn db_serialization() {
        let r = MetricReport {
            snr_full: Db(f64::INFINITY),
            snr_gaps: Some(Db(12.5)),
            lsd: Some(0.0),
            gaps: vec![],
        };
        let text = r.to_json();
        assert!(text.contains("\"inf\""));
        let back: MetricReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn masked_estimate_gives_zero_gap_snr() {
        let n = 4096;
        let x = SeededRng::new(6).normals(n);
        let spec = GapSpec::new(vec![Gap { start: 1000, length: 100 }], n).unwrap();
        let mut est = x.clone();
        est[1000..1100].fill(0.0);
        let rep = evaluate(&x, &est, &spec).unwrap();
        assert!(rep.snr_gaps.unwrap().0.abs() < 1e-12);
        assert!(rep.gaps[0].snr.unwrap().0.abs() < 1e-12);
        assert!(rep.lsd.is_some());
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("metric,value\nsnr_full,"));
    }

    #[test]
    fn spectrogram_dump_shape() {
        let x = SeededRng::new(7).normals(4096);
        let mut buf = Vec::new();
        write_spectrogram_csv(&x, 8000.0, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + LSD_FRAME / 2 + 1);
        assert_eq!(lines[1].split(',').count(), 1 + (4096 - LSD_FRAME) / LSD_HOP);
    }
}
