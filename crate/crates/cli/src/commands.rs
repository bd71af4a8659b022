//! Job execution.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use diffinpaint::cqt::{plan_cqt, CqtParams, CqtPlan, OctaveCoeffs};
use diffinpaint::denoisers::{
    train_linear, Denoiser, GainCheckpoint, GaussianAnalyticDenoiser, LinearCqtDenoiser,
    PostFilter,
};
use diffinpaint::diffusion::{write_trace_csv, Preconditioning};
use diffinpaint::inpaint::{build_problem, inpaint, GuidanceConfig};
use diffinpaint::janssen::{janssen_inpaint, JanssenConfig};
use diffinpaint::metrics::{evaluate, snr, write_spectrogram_csv, MetricReport};
use diffinpaint::rng::SeededRng;
use log::info;
use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, write_wav, Audio, PcmFormat};
use crate::config::{
    BaselineJob, CqtOptions, DenoiserSpec, EvalJob, InpaintJob, Job, TrainData, TrainJob,
    TransformJob, TransformMode,
};
use crate::error::CliError;

pub fn execute(job: &Job) -> Result<(), CliError> {
    match job {
        Job::Inpaint(j) => run_inpaint(j),
        Job::Baseline(j) => run_baseline(j),
        Job::Eval(j) => run_eval(j),
        Job::Transform(j) => run_transform(j),
        Job::Train(j) => run_train(j),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::io(path, e))
}

fn non_empty(audio: &Audio, path: &Path) -> Result<(), CliError> {
    if audio.samples.is_empty() {
        return Err(CliError::Validation(format!("{}: no samples", path.display())));
    }
    Ok(())
}

fn plan_for(params: CqtParams, min_length: usize) -> Result<CqtPlan, CliError> {
    let n = params.padded_length(min_length)?;
    Ok(plan_cqt(params.with_signal_length(n))?)
}

/// Prints the report and writes it when a path is given.
fn report_metrics(report: &MetricReport, path: Option<&Path>) -> Result<(), CliError> {
    let json = report.to_json();
    match path {
        Some(p) => std::fs::write(p, json + "\n").map_err(|e| CliError::io(p, e))?,
        None => println!("{json}"),
    }
    Ok(())
}

fn reference_for(reference: Option<&Path>, fallback: &Audio, len: usize) -> Result<Vec<f64>, CliError> {
    let r = match reference {
        Some(p) => {
            let a = read_wav(p)?;
            if a.sample_rate != fallback.sample_rate {
                return Err(CliError::Validation(format!(
                    "{}: sample rate {} differs from input {}",
                    p.display(),
                    a.sample_rate,
                    fallback.sample_rate
                )));
            }
            a.samples
        }
        None => fallback.samples.clone(),
    };
    if r.len() != len {
        return Err(CliError::Validation(format!(
            "reference has {} samples, output has {len}",
            r.len()
        )));
    }
    Ok(r)
}

fn run_inpaint(job: &InpaintJob) -> Result<(), CliError> {
    let audio = read_wav(&job.input)?;
    non_empty(&audio, &job.input)?;
    let fs = audio.sample_rate;
    let n0 = audio.samples.len();
    let spec0 = job.gaps.resolve(fs, n0)?;
    let guidance = GuidanceConfig::new(job.xi_prime)?;
    let sampler = job.sampler.config()?;

    // the CQT needs a padded length; the tail is observed silence
    let checkpoint = match &job.denoiser {
        DenoiserSpec::LinearCqt { gains, sidecar } => {
            Some(GainCheckpoint::read(open(gains)?, open(sidecar)?)?)
        }
        _ => None,
    };
    if let Some(ck) = &checkpoint {
        if ck.params.sample_rate != fs as f64 {
            return Err(CliError::Validation(format!(
                "checkpoint was trained at {} Hz, input is {fs} Hz",
                ck.params.sample_rate
            )));
        }
    }
    let post_plan = job
        .post_filter
        .map(|o| plan_for(o.params(fs as f64), n0))
        .transpose()?;
    let model_plan = checkpoint
        .as_ref()
        .map(|ck| plan_for(ck.params, n0).map(Arc::new))
        .transpose()?;
    let n = post_plan
        .as_ref()
        .map(|p| p.signal_length())
        .max(model_plan.as_ref().map(|p| p.signal_length()))
        .unwrap_or(n0);
    if model_plan.as_ref().is_some_and(|p| p.signal_length() != n)
        || post_plan.as_ref().is_some_and(|p| p.signal_length() != n)
    {
        return Err(CliError::Validation(
            "post-filter and model filter banks need different padded lengths".into(),
        ));
    }

    let mut x = audio.samples.clone();
    x.resize(n, 0.0);
    let spec = spec0.shifted(0, n)?;
    let problem = build_problem(&spec, &x, job.fade_ms, fs as f64)?;
    info!(
        "{} gaps, {n} samples ({} padding), {} steps",
        spec.gaps().len(),
        n - n0,
        sampler.schedule.steps()
    );

    let denoiser: Box<dyn Denoiser> = match (&job.denoiser, checkpoint, model_plan) {
        (DenoiserSpec::Periodogram { smooth }, _, _) => {
            let observed = problem.mask.iter().sum::<f64>() / n as f64;
            Box::new(GaussianAnalyticDenoiser::from_periodogram(
                &problem.y,
                observed.max(1.0 / n as f64),
                *smooth,
            )?)
        }
        (DenoiserSpec::Ar1 { a, variance }, _, _) => {
            Box::new(GaussianAnalyticDenoiser::circular_ar1(n, *a, *variance)?)
        }
        (DenoiserSpec::LinearCqt { .. }, Some(ck), Some(plan)) => {
            Box::new(LinearCqtDenoiser::from_checkpoint(plan, &ck)?)
        }
        (DenoiserSpec::LinearCqt { .. }, _, _) => unreachable!("checkpoint loaded above"),
    };
    let post = post_plan.as_ref().map(|p| p as &dyn PostFilter);
    let out = inpaint(&problem, denoiser.as_ref(), &guidance, &sampler, post)?;
    let result = &out.x[..n0];
    write_wav(&job.output, result, fs, audio.format)?;

    if let Some(path) = &job.trace {
        write_trace_csv(&out.trace, create(path)?)?;
    }
    if job.metrics.is_some() || job.reference.is_some() {
        let reference = reference_for(job.reference.as_deref(), &audio, n0)?;
        let report = evaluate(&reference, result, &spec0)?;
        report_metrics(&report, job.metrics.as_deref())?;
    }
    Ok(())
}

fn run_baseline(job: &BaselineJob) -> Result<(), CliError> {
    let audio = read_wav(&job.input)?;
    non_empty(&audio, &job.input)?;
    let n = audio.samples.len();
    let spec = job.gaps.resolve(audio.sample_rate, n)?;
    let mut y = audio.samples.clone();
    for g in spec.gaps() {
        y[g.start..g.end()].fill(0.0);
    }
    let cfg = JanssenConfig {
        order: job.order,
        iterations: job.iterations,
        context: job.context,
        ..JanssenConfig::default()
    };
    let out = janssen_inpaint(&y, &spec, &cfg)?;
    for g in &out.gaps {
        info!(
            "gap at {}: order {}, objective {:?}",
            g.gap.start,
            g.order,
            g.objective.last()
        );
    }
    write_wav(&job.output, &out.x, audio.sample_rate, audio.format)?;
    if job.metrics.is_some() || job.reference.is_some() {
        let reference = reference_for(job.reference.as_deref(), &audio, n)?;
        let report = evaluate(&reference, &out.x, &spec)?;
        report_metrics(&report, job.metrics.as_deref())?;
    }
    Ok(())
}

fn run_eval(job: &EvalJob) -> Result<(), CliError> {
    let r = read_wav(&job.reference)?;
    let e = read_wav(&job.estimate)?;
    non_empty(&r, &job.reference)?;
    if r.sample_rate != e.sample_rate || r.samples.len() != e.samples.len() {
        return Err(CliError::Validation(format!(
            "reference is {} samples at {} Hz, estimate is {} samples at {} Hz",
            r.samples.len(),
            r.sample_rate,
            e.samples.len(),
            e.sample_rate
        )));
    }
    let spec = job.gaps.resolve(r.sample_rate, r.samples.len())?;
    let report = evaluate(&r.samples, &e.samples, &spec)?;
    if let Some(path) = &job.csv {
        report.write_csv(create(path)?)?;
    }
    if let Some(path) = &job.spectrogram {
        write_spectrogram_csv(&e.samples, e.sample_rate as f64, create(path)?)?;
    }
    report_metrics(&report, job.metrics.as_deref())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DumpHeader {
    cqt: CqtParams,
    original_length: usize,
    pcm: String,
}

fn pcm_name(f: PcmFormat) -> String {
    match f {
        PcmFormat::Int(b) => format!("int{b}"),
        PcmFormat::Float32 => "float32".into(),
    }
}

fn pcm_from_name(s: &str) -> Result<PcmFormat, CliError> {
    match s {
        "float32" => Ok(PcmFormat::Float32),
        _ => s
            .strip_prefix("int")
            .and_then(|b| b.parse().ok())
            .filter(|b| [8, 16, 24, 32].contains(b))
            .map(PcmFormat::Int)
            .ok_or_else(|| CliError::Validation(format!("unknown sample format {s:?}"))),
    }
}

fn padded_input(audio: &Audio, opts: &CqtOptions) -> Result<(CqtPlan, Vec<f64>), CliError> {
    let plan = plan_for(opts.params(audio.sample_rate as f64), audio.samples.len())?;
    let mut x = audio.samples.clone();
    x.resize(plan.signal_length(), 0.0);
    Ok((plan, x))
}

fn run_transform(job: &TransformJob) -> Result<(), CliError> {
    match &job.mode {
        TransformMode::Forward { input, dir } => {
            let audio = read_wav(input)?;
            non_empty(&audio, input)?;
            let (plan, x) = padded_input(&audio, &job.cqt)?;
            let c = plan.forward(&x)?;
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            let header = DumpHeader {
                cqt: *plan.params(),
                original_length: audio.samples.len(),
                pcm: pcm_name(audio.format),
            };
            serde_json::to_writer_pretty(create(&dir.join("params.json"))?, &header)?;
            let mut raw = create(&dir.join("coeffs.f64"))?;
            for v in c.to_interleaved() {
                raw.write_all(&v.to_le_bytes()).map_err(|e| CliError::io(dir, e))?;
            }
            raw.flush().map_err(|e| CliError::io(dir, e))?;
            for o in 0..plan.params().num_octaves {
                c.write_octave_csv(o, create(&dir.join(format!("octave_{o}.csv")))?)?;
            }
            println!(
                "wrote {} coefficients for {} octaves, redundancy {:.4}",
                c.num_coefficients(),
                plan.params().num_octaves,
                plan.redundancy()
            );
            Ok(())
        }
        TransformMode::Inverse { dir, output } => {
            let header: DumpHeader = serde_json::from_reader(open(&dir.join("params.json"))?)?;
            let plan = plan_cqt(header.cqt)?;
            let mut bytes = Vec::new();
            let path = dir.join("coeffs.f64");
            open(&path)?
                .read_to_end(&mut bytes)
                .map_err(|e| CliError::io(&path, e))?;
            if bytes.len() % 8 != 0 {
                return Err(CliError::Validation(format!(
                    "{}: size is not a multiple of 8 bytes",
                    path.display()
                )));
            }
            let vals: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                .collect();
            let c = OctaveCoeffs::from_interleaved(&plan, &vals)?;
            let x = plan.inverse(&c)?;
            let len = header.original_length.min(x.len());
            write_wav(
                output,
                &x[..len],
                header.cqt.sample_rate as u32,
                pcm_from_name(&header.pcm)?,
            )
        }
        TransformMode::Roundtrip { input, output } => {
            let audio = read_wav(input)?;
            non_empty(&audio, input)?;
            let (plan, x) = padded_input(&audio, &job.cqt)?;
            let back = plan.inverse(&plan.forward(&x)?)?;
            let projected = plan.dc_notch(&x)?;
            let fmt = |v: f64| {
                if v.is_infinite() {
                    "inf".to_string()
                } else {
                    format!("{v:.2}")
                }
            };
            println!("redundancy {:.4}", plan.redundancy());
            println!("rasterized redundancy {:.4}", plan.rasterized_redundancy());
            println!("snr vs input (dB) {}", fmt(snr(&x, &back, None)?));
            match snr(&projected, &back, None) {
                Ok(v) => println!("snr vs band projection (dB) {}", fmt(v)),
                Err(diffinpaint::Error::ZeroEnergyReference) => {
                    println!("snr vs band projection (dB) n/a (no in-band energy)")
                }
                Err(e) => return Err(e.into()),
            }
            if let Some(out) = output {
                write_wav(out, &back[..audio.samples.len()], audio.sample_rate, audio.format)?;
            }
            Ok(())
        }
    }
}

fn run_train(job: &TrainJob) -> Result<(), CliError> {
    let mut rng = SeededRng::new(job.seed);
    let (fs, segments) = match &job.data {
        TrainData::White {
            count,
            variance,
            sample_rate,
        } => {
            let sd = variance.sqrt();
            let segs = (0..*count)
                .map(|_| rng.normals(job.segment_length).iter().map(|v| sd * v).collect())
                .collect::<Vec<Vec<f64>>>();
            (*sample_rate, segs)
        }
        TrainData::Files(paths) => {
            let mut fs = None;
            let mut segs = Vec::new();
            for p in paths {
                let a = read_wav(p)?;
                if *fs.get_or_insert(a.sample_rate) != a.sample_rate {
                    return Err(CliError::Validation(format!(
                        "{}: sample rate {} differs from the first file",
                        p.display(),
                        a.sample_rate
                    )));
                }
                segs.extend(
                    a.samples
                        .chunks_exact(job.segment_length.max(1))
                        .map(<[f64]>::to_vec),
                );
            }
            let fs = fs.ok_or_else(|| CliError::Validation("no training files".into()))?;
            (fs, segs)
        }
    };
    let plan = Arc::new(plan_for(job.cqt.params(fs as f64), job.segment_length)?);
    let data: Vec<Vec<f64>> = segments
        .into_iter()
        .map(|mut s| {
            s.resize(plan.signal_length(), 0.0);
            s
        })
        .collect();
    info!("{} segments of {} samples", data.len(), plan.signal_length());
    let mut model = LinearCqtDenoiser::new(plan, Preconditioning::new(job.sigma_data));
    let report = train_linear(&mut model, &data, &job.train, &mut rng)?;
    let ck = model.checkpoint();
    ck.write_gains_csv(create(&job.gains)?)?;
    ck.write_sidecar(create(&job.sidecar)?)?;
    if let Some(path) = &job.loss_curve {
        report.write_csv(create(path)?)?;
    }
    println!(
        "trained {} gains over {} steps; loss {:.6e} -> {:.6e}",
        ck.gains.len(),
        report.loss_curve.len(),
        report.loss_curve.first().copied().unwrap_or(f64::NAN),
        report.loss_curve.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}
