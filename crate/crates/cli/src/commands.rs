//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hasopt_core::baselines::{aggressive_logic, rate_based_logic, RateBasedConfig};
use hasopt_core::{
    as_logic, brute_force, build_corpus, compute, generate_trace, generate_video,
    mbps_to_bytes_per_sec, script_logic, train_corpus, AdaptationLogic, AdaptationPath, Corpus,
    MlpModel, ScalingContext, ThroughputTrace, TraceSpec, TrainConfig, Video, VideoSpec,
};
use serde::Deserialize;

use crate::evaluate::evaluate as run_evaluation;
use crate::manifest::RunManifest;
use crate::provenance::{input_name, write_csv, write_json, Provenance};
use crate::{
    default_workers, AlgoSpec, EvaluateArgs, ExtractArgs, GenTraceArgs, GenVideoArgs,
    PartialFailure, SessionArgs, SimulateArgs, SolveArgs, TrainArgs, UsageError,
};

fn load_video(prov: &mut Provenance, path: &Path) -> Result<Video> {
    let bytes = prov.read_input(format!("video:{}", input_name(path)), path)?;
    Video::from_json_reader(&bytes[..]).with_context(|| format!("parsing video {}", path.display()))
}

fn load_trace(prov: &mut Provenance, path: &Path) -> Result<ThroughputTrace> {
    let bytes = prov.read_input(format!("trace:{}", input_name(path)), path)?;
    ThroughputTrace::read_csv(&bytes[..]).with_context(|| format!("parsing trace {}", path.display()))
}

fn session_flags(prov: &mut Provenance, s: &SessionArgs) {
    prov.flag("start", s.start);
    prov.flag("epsilon", s.epsilon);
    prov.flag("t0", s.t0);
    prov.flag("rebuffer_target", s.rebuffer_target);
}

fn thread_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let workers = workers.unwrap_or_else(default_workers);
    if workers == 0 {
        return Err(UsageError("--workers must be at least 1".into()).into());
    }
    Ok(rayon::ThreadPoolBuilder::new().num_threads(workers).build()?)
}

pub fn gen_trace(a: &GenTraceArgs) -> Result<()> {
    let spec = TraceSpec {
        mean_rate: mbps_to_bytes_per_sec(a.mean_mbps),
        cv: a.cv,
        ac1: a.ac1,
        duration_s: a.duration,
        seed: a.seed,
    };
    let trace = generate_trace(&spec)?;
    let mut prov = Provenance::new("gen-trace");
    prov.flag("mean_mbps", a.mean_mbps);
    prov.flag("cv", a.cv);
    prov.flag("ac1", a.ac1);
    prov.flag("duration", a.duration);
    prov.flag("seed", a.seed);
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    write_csv(&a.output, &buf, &prov)?;
    println!("{} samples, mean {:.0} B/s", trace.samples().len(), trace.mean());
    Ok(())
}

pub fn gen_video(a: &GenVideoArgs) -> Result<()> {
    let spec = VideoSpec {
        n_segments: a.segments,
        level_rates: a.rates_mbps.iter().copied().map(mbps_to_bytes_per_sec).collect(),
        segment_duration_s: a.segment_duration,
        burstiness: a.burstiness,
        seed: a.seed,
    };
    let video = generate_video(&spec)?;
    let mut prov = Provenance::new("gen-video");
    prov.flag("segments", a.segments);
    prov.flag("rates_mbps", &a.rates_mbps);
    prov.flag("segment_duration", a.segment_duration);
    prov.flag("burstiness", a.burstiness);
    prov.flag("seed", a.seed);
    write_json(&a.output, &video, &prov)?;
    println!("{} segments x {} levels", video.n(), video.r());
    Ok(())
}

pub fn solve(a: &SolveArgs) -> Result<()> {
    let mut prov = Provenance::new("solve");
    let video = load_video(&mut prov, &a.video)?;
    let trace = load_trace(&mut prov, &a.trace)?;
    session_flags(&mut prov, &a.session);
    prov.flag("brute_force", a.brute_force);
    let cfg = a.session.config();
    let result = if a.brute_force {
        brute_force(&video, &trace, &cfg)?
    } else {
        hasopt_core::solve(&video, &trace, &cfg)?
    };
    write_json(&a.output, &result, &prov)?;
    println!(
        "w_opt {}  mean quality {}  switches {}",
        result.w_opt, result.step2_mean_quality, result.switches
    );
    Ok(())
}

fn video_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.is_file() && p.extension().is_some_and(|e| e == "json"));
    files.sort();
    if files.is_empty() {
        return Err(UsageError(format!("no video JSON files in {}", dir.display())).into());
    }
    Ok(files)
}

pub fn extract(a: &ExtractArgs) -> Result<()> {
    let mut prov = Provenance::new("extract");
    let videos = video_files(&a.videos)?
        .iter()
        .map(|p| load_video(&mut prov, p))
        .collect::<Result<Vec<_>>>()?;
    let trace = load_trace(&mut prov, &a.trace)?;
    session_flags(&mut prov, &a.session);
    prov.flag("starts", &a.starts.0);
    let cfg = a.session.config();
    let corpus = thread_pool(a.workers)?.install(|| build_corpus(&videos, &trace, &a.starts.0, &cfg, None))?;

    let mut buf = Vec::new();
    corpus.write_csv(&mut buf)?;
    write_csv(&a.output, &buf, &prov)?;
    let scaling = a.scaling.clone().unwrap_or_else(|| a.output.with_extension("scaling.json"));
    write_json(&scaling, corpus.ctx, &prov)?;
    println!(
        "{} samples from {} videos x {} starts, nu = {}",
        corpus.samples.len(),
        videos.len(),
        a.starts.0.len(),
        corpus.ctx.nu
    );
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let mut prov = Provenance::new("train");
    let corpus_bytes = prov.read_input(format!("corpus:{}", input_name(&a.corpus)), &a.corpus)?;
    let scaling_path = a.scaling.clone().unwrap_or_else(|| a.corpus.with_extension("scaling.json"));
    let scaling_bytes = prov.read_input(format!("scaling:{}", input_name(&scaling_path)), &scaling_path)?;
    let ctx: ScalingContext = serde_json::from_slice(&scaling_bytes)
        .with_context(|| format!("parsing scaling context {}", scaling_path.display()))?;
    let r = Corpus::levels_in_header(&corpus_bytes[..])?;
    let corpus = Corpus::read_csv(&corpus_bytes[..], ctx, r)?;

    let cfg = TrainConfig {
        hidden_size: a.hidden,
        learning_rate: a.lr,
        batch_size: a.batch,
        epochs: a.epochs,
        seed: a.seed,
        validation_fraction: a.validation_fraction,
        ..TrainConfig::default()
    };
    prov.flag("train_config", cfg);
    let (model, report) = train_corpus(&corpus, &cfg)?;

    let mut buf = Vec::new();
    model.to_json_writer(&mut buf)?;
    let model_json: serde_json::Value = serde_json::from_slice(&buf)?;
    write_json(&a.output, model_json, &prov)?;
    let report_path = a.report.clone().unwrap_or_else(|| a.output.with_extension("report.json"));
    write_json(&report_path, &report, &prov)?;
    println!("validation accuracy: {:.4}", report.final_validation_accuracy());
    Ok(())
}

/// Levels of a scripted path: a bare array, or any object with `levels`
/// (such as the output of `solve`).
#[derive(Deserialize)]
#[serde(untagged)]
enum ScriptFile {
    Levels(Vec<usize>),
    Object { levels: Vec<usize> },
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let mut prov = Provenance::new("simulate");
    let video = load_video(&mut prov, &a.video)?;
    let trace = load_trace(&mut prov, &a.trace)?;
    session_flags(&mut prov, &a.session);
    let logic: Box<dyn AdaptationLogic> = match &a.algo {
        AlgoSpec::Rate => {
            let d = RateBasedConfig::default();
            let cfg = RateBasedConfig {
                safety_factor: a.safety_factor.unwrap_or(d.safety_factor),
                smoothing_window: a.smoothing_window.unwrap_or(d.smoothing_window),
                upswitch_min_buffer_s: a.upswitch_buffer.unwrap_or(d.upswitch_min_buffer_s),
            };
            prov.flag("algo", "rate");
            prov.flag("rate_config", cfg);
            Box::new(rate_based_logic(cfg, &video)?)
        }
        AlgoSpec::Aggressive => {
            prov.flag("algo", "aggressive");
            Box::new(aggressive_logic(&video))
        }
        AlgoSpec::Model(path) => {
            prov.flag("algo", "model");
            let bytes = prov.read_input(format!("model:{}", input_name(path)), path)?;
            let model = MlpModel::from_json_reader(&bytes[..])
                .with_context(|| format!("parsing model {}", path.display()))?;
            Box::new(as_logic(&model, &video)?)
        }
        AlgoSpec::Script(path) => {
            prov.flag("algo", "script");
            let bytes = prov.read_input(format!("script:{}", input_name(path)), path)?;
            let levels = match serde_json::from_slice(&bytes)
                .with_context(|| format!("parsing script {}", path.display()))?
            {
                ScriptFile::Levels(l) | ScriptFile::Object { levels: l } => l,
            };
            Box::new(script_logic(&AdaptationPath::new(levels, &video)?, &video)?)
        }
    };
    let log = hasopt_core::simulate(&video, &trace, &a.session.config(), logic.as_ref())?;
    write_json(&a.output, &log, &prov)?;
    let m = compute(&log, &video);
    println!(
        "stalls {}  switching/min {:.3}  avg quality {:.3}  avg buffer {:.2} s  stalling ratio {:.4}",
        log.stall_events.len(),
        m.switching_frequency,
        m.avg_quality,
        m.avg_buffer_level_s,
        m.stalling_time_ratio
    );
    Ok(())
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let mut prov = Provenance::new("evaluate");
    let bytes = prov.read_input("manifest", &a.manifest)?;
    let manifest = RunManifest::from_bytes(&bytes)?;
    let base = a.manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let out_dir = match (&a.output, &manifest.output_dir) {
        (Some(dir), _) => dir.clone(),
        (None, Some(dir)) if dir.is_absolute() => dir.clone(),
        (None, Some(dir)) => base.join(dir),
        (None, None) => return Err(UsageError("no output directory: pass -o or set output_dir".into()).into()),
    };
    let setup = manifest.load(&base, &mut prov)?;
    let workers = a.workers.unwrap_or_else(default_workers);
    if workers == 0 {
        return Err(UsageError("--workers must be at least 1".into()).into());
    }
    let eval = run_evaluation(&setup, workers)?;

    write_csv(&out_dir.join("runs.csv"), &eval.runs_csv()?, &prov)?;
    write_json(&out_dir.join("summary.json"), &eval.summary, &prov)?;
    for s in &eval.summary.algorithms {
        match &s.differential {
            Some(d) => println!(
                "{:<12} runs {:>5}  stalled {:>5.1}%  median diff: switching/min {:+.3}  quality {:+.3}  share switching <= optimal {:.1}%",
                s.label,
                s.runs,
                100.0 * s.stalled_fraction,
                d.switching_frequency.median,
                d.avg_quality.median,
                100.0 * d.switching_frequency.fraction_le_zero
            ),
            None => println!(
                "{:<12} runs {:>5}  median switching/min {:.3}  quality {:.3}",
                s.label, s.runs, s.metrics.switching_frequency.median, s.metrics.avg_quality.median
            ),
        }
    }
    let failed = &eval.summary.failed_pairs;
    if !failed.is_empty() {
        for f in failed {
            eprintln!("failed: video {} start {} s: {}", f.video, f.start_s, f.error);
        }
        return Err(PartialFailure {
            failed: failed.len(),
            total: eval.summary.pairs,
        }
        .into());
    }
    Ok(())
}
