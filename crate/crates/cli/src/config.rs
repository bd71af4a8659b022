//! Job configuration. Every subcommand resolves its flags into a
//! [`JobConfig`], which can be saved and replayed with `run`.

use std::path::{Path, PathBuf};

use diffinpaint::cqt::{CqtParams, DEFAULT_TRANSITION};
use diffinpaint::diffusion::{NoiseSchedule, SamplerConfig, SamplerOrder};
use diffinpaint::inpaint::{GapSpec, GapSpecFile};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub schema_version: u32,
    pub job: Job,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Job {
    Inpaint(InpaintJob),
    Baseline(BaselineJob),
    Eval(EvalJob),
    Transform(TransformJob),
    Train(TrainJob),
}

impl JobConfig {
    pub fn new(job: Job) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            job,
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: JobConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Validation(format!(
                "{}: schema_version {} is not supported (expected {SCHEMA_VERSION})",
                path.display(),
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("plain data serializes");
        std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GapSource {
    /// Gap list in milliseconds.
    File(PathBuf),
    /// `count` gaps of `length_ms` spread evenly over the signal.
    EquallySpaced { count: usize, length_ms: f64 },
    None,
}

impl GapSource {
    pub fn resolve(&self, sample_rate: u32, signal_length: usize) -> Result<GapSpec, CliError> {
        match self {
            GapSource::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                let file = GapSpecFile::from_json(&text)?;
                Ok(file.to_spec(sample_rate, signal_length)?)
            }
            GapSource::EquallySpaced { count, length_ms } => {
                let len = (length_ms * sample_rate as f64 / 1000.0).round() as usize;
                Ok(GapSpec::equally_spaced(signal_length, *count, len)?)
            }
            GapSource::None => Ok(GapSpec::none(signal_length)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CqtOptions {
    pub bins_per_octave: usize,
    pub num_octaves: usize,
    /// Defaults to `fs / 2^(num_octaves + 1)`.
    pub f_min: Option<f64>,
    pub transition: f64,
}

impl Default for CqtOptions {
    fn default() -> Self {
        Self {
            bins_per_octave: 64,
            num_octaves: 8,
            f_min: None,
            transition: DEFAULT_TRANSITION,
        }
    }
}

impl CqtOptions {
    pub fn params(&self, sample_rate: f64) -> CqtParams {
        let p = CqtParams::new(sample_rate, self.bins_per_octave, self.num_octaves, 0)
            .with_transition(self.transition);
        match self.f_min {
            Some(f) => p.with_f_min(f),
            None => p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerParams {
    pub steps: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rho: f64,
    pub s_churn: f64,
    pub order: SamplerOrder,
    pub seed: u64,
}

impl Default for SamplerParams {
    fn default() -> Self {
        Self {
            steps: 70,
            sigma_min: 1e-4,
            sigma_max: 1.0,
            rho: 13.0,
            s_churn: 10.0,
            order: SamplerOrder::First,
            seed: 0,
        }
    }
}

impl SamplerParams {
    pub fn config(&self) -> Result<SamplerConfig, CliError> {
        let schedule = NoiseSchedule::new(self.steps, self.sigma_min, self.sigma_max, self.rho, self.s_churn)?;
        Ok(SamplerConfig::new(schedule, self.seed).with_order(self.order))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DenoiserSpec {
    /// Stationary Gaussian prior estimated from the observed samples.
    Periodogram { smooth: usize },
    /// Periodic AR(1) Gaussian prior.
    Ar1 { a: f64, variance: f64 },
    /// Trained CQT-domain gains.
    LinearCqt { gains: PathBuf, sidecar: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InpaintJob {
    pub input: PathBuf,
    pub output: PathBuf,
    pub gaps: GapSource,
    pub denoiser: DenoiserSpec,
    pub sampler: SamplerParams,
    pub xi_prime: f64,
    pub fade_ms: f64,
    /// Filter bank for the DC-notch post-filter; `None` disables it.
    pub post_filter: Option<CqtOptions>,
    pub reference: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineJob {
    pub input: PathBuf,
    pub output: PathBuf,
    pub gaps: GapSource,
    pub order: Option<usize>,
    pub iterations: usize,
    pub context: usize,
    pub reference: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalJob {
    pub reference: PathBuf,
    pub estimate: PathBuf,
    pub gaps: GapSource,
    pub metrics: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub spectrogram: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TransformMode {
    /// Coefficients to `dir`: raw `coeffs.f64`, `params.json` and one dB
    /// CSV per octave.
    Forward { input: PathBuf, dir: PathBuf },
    /// Audio from a directory written by `forward`.
    Inverse { dir: PathBuf, output: PathBuf },
    /// Forward then inverse; reports SNR and redundancy.
    Roundtrip { input: PathBuf, output: Option<PathBuf> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformJob {
    pub mode: TransformMode,
    pub cqt: CqtOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TrainData {
    /// WAV files cut into segments.
    Files(Vec<PathBuf>),
    /// Synthetic white Gaussian signals.
    White {
        count: usize,
        variance: f64,
        sample_rate: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainJob {
    pub data: TrainData,
    pub segment_length: usize,
    pub cqt: CqtOptions,
    pub sigma_data: f64,
    pub train: diffinpaint::denoisers::TrainConfig,
    pub seed: u64,
    pub gains: PathBuf,
    pub sidecar: PathBuf,
    pub loss_curve: Option<PathBuf>,
}
