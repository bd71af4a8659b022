//! WAV I/O. Samples are held as mono `f64` in `[-1, 1]`; the input's sample
//! format is remembered so untouched samples are written back bit-exactly.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use log::warn;

use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct Audio {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub format: PcmFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcmFormat {
    Int(u16),
    Float32,
}

impl PcmFormat {
    fn spec(self, sample_rate: u32) -> WavSpec {
        let (bits_per_sample, sample_format) = match self {
            PcmFormat::Int(bits) => (bits, SampleFormat::Int),
            PcmFormat::Float32 => (32, SampleFormat::Float),
        };
        WavSpec {
            channels: 1,
            sample_rate,
            bits_per_sample,
            sample_format,
        }
    }
}

fn int_scale(bits: u16) -> f64 {
    (1u64 << (bits - 1)) as f64
}

pub fn read_wav(path: &Path) -> Result<Audio, CliError> {
    let reader = WavReader::open(path).map_err(|e| CliError::from_hound(e, path))?;
    let spec = reader.spec();
    let format = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, b @ (8 | 16 | 24 | 32)) => PcmFormat::Int(b),
        (SampleFormat::Float, 32) => PcmFormat::Float32,
        (f, b) => {
            return Err(CliError::Validation(format!(
                "{}: unsupported sample format {f:?} with {b} bits",
                path.display()
            )))
        }
    };
    let interleaved: Vec<f64> = match format {
        PcmFormat::Int(bits) => {
            let scale = int_scale(bits);
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()
        }
        PcmFormat::Float32 => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>(),
    }
    .map_err(|e| CliError::from_hound(e, path))?;

    let channels = spec.channels as usize;
    let samples = if channels == 1 {
        interleaved
    } else {
        warn!(
            "{}: downmixing {channels} channels to mono",
            path.display()
        );
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect()
    };
    Ok(Audio {
        samples,
        sample_rate: spec.sample_rate,
        format,
    })
}

/// Writes mono audio, quantising to `format`. Integer output is clipped to
/// the representable range.
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32, format: PcmFormat) -> Result<(), CliError> {
    let io = |e| CliError::from_hound(e, path);
    let mut w = WavWriter::create(path, format.spec(sample_rate)).map_err(io)?;
    match format {
        PcmFormat::Int(bits) => {
            let scale = int_scale(bits);
            let mut clipped = 0usize;
            for &v in samples {
                let q = (v * scale).round();
                let c = q.clamp(-scale, scale - 1.0);
                if c != q {
                    clipped += 1;
                }
                if bits == 8 {
                    w.write_sample(c as i8).map_err(io)?;
                } else if bits == 16 {
                    w.write_sample(c as i16).map_err(io)?;
                } else {
                    w.write_sample(c as i32).map_err(io)?;
                }
            }
            if clipped > 0 {
                warn!("{}: clipped {clipped} samples", path.display());
            }
        }
        PcmFormat::Float32 => {
            for &v in samples {
                w.write_sample(v as f32).map_err(io)?;
            }
        }
    }
    w.finalize().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn int16_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let samples: Vec<f64> = (-50..50).map(|i| i as f64 * 300.0 / 32768.0).collect();
        write_wav(&path, &samples, 8000, PcmFormat::Int(16)).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.samples, samples);
        assert_eq!(back.format, PcmFormat::Int(16));
    }

    #[test]
    fn float_and_24_bit() {
        let dir = tempfile::tempdir().unwrap();
        for fmt in [PcmFormat::Float32, PcmFormat::Int(24)] {
            let path = dir.path().join("b.wav");
            write_wav(&path, &[0.5, -0.25, 0.0], 44100, fmt).unwrap();
            let back = read_wav(&path).unwrap();
            assert_eq!(back.samples, vec![0.5, -0.25, 0.0]);
            assert_eq!(back.sample_rate, 44100);
        }
    }

    #[test]
    fn stereo_is_downmixed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&path, spec).unwrap();
        for v in [1000i16, 3000, -2000, 0] {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
        let a = read_wav(&path).unwrap();
        assert_eq!(a.samples, vec![2000.0 / 32768.0, -1000.0 / 32768.0]);
    }
}
