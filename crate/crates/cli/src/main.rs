//! `diffinpaint`: audio gap filling from the command line.
//!
//! Every subcommand resolves its flags into a JSON job description.
//! `--save-config` writes that description before running, and
//! `diffinpaint run --config job.json` replays it.

mod audio;
mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use diffinpaint::denoisers::TrainConfig;
use diffinpaint::diffusion::SamplerOrder;

use crate::config::{
    BaselineJob, CqtOptions, DenoiserSpec, EvalJob, GapSource, InpaintJob, Job, JobConfig,
    SamplerParams, TrainData, TrainJob, TransformJob, TransformMode,
};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "diffinpaint", version, about = "Fill gaps in audio recordings")]
struct Cli {
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true, env = "INPAINT_THREADS")]
    threads: Option<usize>,

    /// Write the resolved job description to this file before running.
    #[arg(long, global = true)]
    save_config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fill gaps with the diffusion posterior sampler.
    Inpaint(InpaintArgs),
    /// Fill gaps with iterative AR interpolation.
    Baseline(BaselineArgs),
    /// Compare an estimate with a reference.
    Eval(EvalArgs),
    /// Forward, inverse or round-trip constant-Q transform.
    Transform(TransformArgs),
    /// Fit CQT-domain denoiser gains.
    Train(TrainArgs),
    /// Run a saved job description.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct GapArgs {
    /// JSON gap list in milliseconds.
    #[arg(long, conflicts_with = "equally_spaced")]
    gaps: Option<PathBuf>,
    /// Number of evenly spread gaps.
    #[arg(long, requires = "gap_ms")]
    equally_spaced: Option<usize>,
    /// Length of each evenly spread gap.
    #[arg(long)]
    gap_ms: Option<f64>,
}

impl GapArgs {
    fn source(&self) -> GapSource {
        match (&self.gaps, self.equally_spaced, self.gap_ms) {
            (Some(p), _, _) => GapSource::File(p.clone()),
            (None, Some(count), Some(length_ms)) => GapSource::EquallySpaced { count, length_ms },
            _ => GapSource::None,
        }
    }
}

#[derive(Args)]
struct CqtArgs {
    #[arg(long, default_value_t = 64)]
    bins_per_octave: usize,
    #[arg(long, default_value_t = 8)]
    octaves: usize,
    /// Lowest centre frequency in Hz; defaults to fs / 2^(octaves + 1).
    #[arg(long)]
    f_min: Option<f64>,
    /// Relative width of the filter flanks.
    #[arg(long, default_value_t = diffinpaint::cqt::DEFAULT_TRANSITION)]
    transition: f64,
}

impl CqtArgs {
    fn options(&self) -> CqtOptions {
        CqtOptions {
            bins_per_octave: self.bins_per_octave,
            num_octaves: self.octaves,
            f_min: self.f_min,
            transition: self.transition,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DenoiserKind {
    Periodogram,
    Ar1,
    LinearCqt,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    First,
    Second,
}

#[derive(Args)]
struct InpaintArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    gaps: GapArgs,
    #[arg(long, value_enum, default_value = "periodogram")]
    denoiser: DenoiserKind,
    /// Moving-average width for the periodogram prior.
    #[arg(long, default_value_t = 33)]
    smooth: usize,
    #[arg(long, default_value_t = 0.95)]
    ar_coeff: f64,
    #[arg(long, default_value_t = 0.01)]
    ar_variance: f64,
    /// Gains CSV from `train`.
    #[arg(long, required_if_eq("denoiser", "linear-cqt"))]
    model: Option<PathBuf>,
    /// Sidecar JSON from `train`.
    #[arg(long, required_if_eq("denoiser", "linear-cqt"))]
    sidecar: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 70)]
    steps: usize,
    #[arg(long, default_value_t = 10.0)]
    schurn: f64,
    /// Guidance strength.
    #[arg(long, default_value_t = 0.25)]
    xi: f64,
    #[arg(long, default_value_t = 13.0)]
    rho: f64,
    #[arg(long, default_value_t = 1e-4)]
    sigma_min: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_max: f64,
    #[arg(long, value_enum, default_value = "first")]
    order: OrderArg,
    #[arg(long, default_value_t = 1.0)]
    fade_ms: f64,
    /// Skip the DC-notch post-filter.
    #[arg(long)]
    no_post_filter: bool,
    #[command(flatten)]
    cqt: CqtArgs,
    /// Clean signal for metrics; defaults to the input.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Metrics JSON; printed to stdout when only `--reference` is given.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Per-step sampler trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    gaps: GapArgs,
    /// AR order; chosen from the gap length when omitted.
    #[arg(long)]
    order: Option<usize>,
    #[arg(long, default_value_t = 5)]
    iterations: usize,
    #[arg(long, default_value_t = 2048)]
    context: usize,
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    estimate: PathBuf,
    #[command(flatten)]
    gaps: GapArgs,
    /// Metrics JSON; printed to stdout when omitted.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Per-gap CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Log-magnitude spectrogram CSV of the estimate.
    #[arg(long)]
    spectrogram: Option<PathBuf>,
}

#[derive(Args)]
struct TransformArgs {
    #[command(subcommand)]
    mode: TransformCmd,
    #[command(flatten)]
    cqt: CqtArgs,
}

#[derive(Subcommand)]
enum TransformCmd {
    Forward {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        dir: PathBuf,
    },
    Inverse {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    Roundtrip {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// Training WAV files; synthetic white noise when none are given.
    #[arg(long = "input")]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = 32)]
    white_count: usize,
    #[arg(long, default_value_t = 0.25)]
    white_variance: f64,
    #[arg(long, default_value_t = 8000)]
    sample_rate: u32,
    #[arg(long, default_value_t = 8192)]
    segment_length: usize,
    #[arg(long, default_value_t = 0.5)]
    sigma_data: f64,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long, default_value_t = 0.05)]
    learning_rate: f64,
    #[arg(long, default_value_t = 4)]
    noise_draws: usize,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, default_value_t = 0.999)]
    ema_decay: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    cqt: CqtArgs,
    #[arg(long)]
    gains: PathBuf,
    #[arg(long)]
    sidecar: PathBuf,
    #[arg(long)]
    loss_curve: Option<PathBuf>,
}

impl Command {
    fn into_job(self) -> Result<Job, CliError> {
        Ok(match self {
            Command::Inpaint(a) => {
                let denoiser = match a.denoiser {
                    DenoiserKind::Periodogram => DenoiserSpec::Periodogram { smooth: a.smooth },
                    DenoiserKind::Ar1 => DenoiserSpec::Ar1 {
                        a: a.ar_coeff,
                        variance: a.ar_variance,
                    },
                    DenoiserKind::LinearCqt => DenoiserSpec::LinearCqt {
                        gains: a.model.expect("required by clap"),
                        sidecar: a.sidecar.expect("required by clap"),
                    },
                };
                Job::Inpaint(InpaintJob {
                    input: a.input,
                    output: a.output,
                    gaps: a.gaps.source(),
                    denoiser,
                    sampler: SamplerParams {
                        steps: a.steps,
                        sigma_min: a.sigma_min,
                        sigma_max: a.sigma_max,
                        rho: a.rho,
                        s_churn: a.schurn,
                        order: match a.order {
                            OrderArg::First => SamplerOrder::First,
                            OrderArg::Second => SamplerOrder::Second,
                        },
                        seed: a.seed,
                    },
                    xi_prime: a.xi,
                    fade_ms: a.fade_ms,
                    post_filter: (!a.no_post_filter).then(|| a.cqt.options()),
                    reference: a.reference,
                    metrics: a.metrics,
                    trace: a.trace,
                })
            }
            Command::Baseline(a) => Job::Baseline(BaselineJob {
                input: a.input,
                output: a.output,
                gaps: a.gaps.source(),
                order: a.order,
                iterations: a.iterations,
                context: a.context,
                reference: a.reference,
                metrics: a.metrics,
            }),
            Command::Eval(a) => Job::Eval(EvalJob {
                reference: a.reference,
                estimate: a.estimate,
                gaps: a.gaps.source(),
                metrics: a.metrics,
                csv: a.csv,
                spectrogram: a.spectrogram,
            }),
            Command::Transform(a) => Job::Transform(TransformJob {
                mode: match a.mode {
                    TransformCmd::Forward { input, dir } => TransformMode::Forward { input, dir },
                    TransformCmd::Inverse { dir, output } => TransformMode::Inverse { dir, output },
                    TransformCmd::Roundtrip { input, output } => {
                        TransformMode::Roundtrip { input, output }
                    }
                },
                cqt: a.cqt.options(),
            }),
            Command::Train(a) => Job::Train(TrainJob {
                data: if a.inputs.is_empty() {
                    TrainData::White {
                        count: a.white_count,
                        variance: a.white_variance,
                        sample_rate: a.sample_rate,
                    }
                } else {
                    TrainData::Files(a.inputs)
                },
                segment_length: a.segment_length,
                cqt: a.cqt.options(),
                sigma_data: a.sigma_data,
                train: TrainConfig {
                    steps: a.steps,
                    learning_rate: a.learning_rate,
                    noise_draws: a.noise_draws,
                    batch_size: a.batch_size,
                    ema_decay: a.ema_decay,
                    ..TrainConfig::default()
                },
                seed: a.seed,
                gains: a.gains,
                sidecar: a.sidecar,
                loss_curve: a.loss_curve,
            }),
            Command::Run { config } => JobConfig::load(&config)?.job,
        })
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    }
    let job = cli.command.into_job()?;
    if let Some(path) = &cli.save_config {
        JobConfig::new(job.clone()).save(path)?;
    }
    commands::execute(&job)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
