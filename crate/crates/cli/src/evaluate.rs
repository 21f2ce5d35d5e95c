//! Batch evaluation: every algorithm against the optimal path on every
//! (video, start) pair, with differential metrics and their distributions.

use hasopt_core::baselines::{aggressive_logic, rate_based_logic, RateBasedConfig};
use hasopt_core::metrics::{MetricSet, Summary, METRIC_NAMES};
use hasopt_core::{
    aggregate, as_logic, compute, differential, optimal_metrics, simulate, solve, AdaptationLogic,
    DifferentialMetrics, MlpModel, SessionConfig, SessionMetrics, ThroughputTrace, Video,
};
use rayon::prelude::*;
use serde::Serialize;

/// Row label of the optimal path in the outputs.
pub const OPTIMAL: &str = "optimal";

#[derive(Debug, Clone)]
pub enum AlgorithmKind {
    Model(Box<MlpModel>),
    Rate(RateBasedConfig),
    Aggressive,
}

#[derive(Debug, Clone)]
pub struct Algorithm {
    pub label: String,
    pub kind: AlgorithmKind,
}

impl Algorithm {
    fn logic(&self, video: &Video) -> hasopt_core::Result<Box<dyn AdaptationLogic>> {
        Ok(match &self.kind {
            AlgorithmKind::Model(model) => Box::new(as_logic(model, video)?),
            AlgorithmKind::Rate(cfg) => Box::new(rate_based_logic(*cfg, video)?),
            AlgorithmKind::Aggressive => Box::new(aggressive_logic(video)),
        })
    }
}

/// Everything an evaluation needs, already loaded.
#[derive(Debug, Clone)]
pub struct Setup {
    /// Display name and manifest of each video.
    pub videos: Vec<(String, Video)>,
    pub trace: ThroughputTrace,
    pub starts: Vec<u32>,
    /// Session parameters; the trace start is set per run.
    pub session: SessionConfig,
    pub algorithms: Vec<Algorithm>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub video: String,
    pub start_s: u32,
    pub algorithm: String,
    pub stall_events: usize,
    pub metrics: SessionMetrics,
    pub differential: DifferentialMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailedPair {
    pub video: String,
    pub start_s: u32,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgorithmSummary {
    pub label: String,
    pub runs: usize,
    /// Runs with at least one stall.
    pub stalled_runs: usize,
    pub stalled_fraction: f64,
    pub metrics: Summary,
    /// Algorithm minus optimal; absent for the optimal path itself.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub differential: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationSummary {
    pub metric_names: [&'static str; 5],
    pub pairs: usize,
    pub failed_pairs: Vec<FailedPair>,
    /// Optimal path first, then the algorithms in setup order.
    pub algorithms: Vec<AlgorithmSummary>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Ordered by video, start, then optimal followed by the algorithms.
    pub rows: Vec<RunRow>,
    pub summary: EvaluationSummary,
}

impl Evaluation {
    pub fn algorithm(&self, label: &str) -> Option<&AlgorithmSummary> {
        self.summary.algorithms.iter().find(|a| a.label == label)
    }

    pub fn runs_csv(&self) -> anyhow::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["video".to_string(), "start_s".into(), "algorithm".into(), "stall_events".into()];
        header.extend(METRIC_NAMES.iter().map(|m| m.to_string()));
        header.extend(METRIC_NAMES.iter().map(|m| format!("diff_{m}")));
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![
                row.video.clone(),
                row.start_s.to_string(),
                row.algorithm.clone(),
                row.stall_events.to_string(),
            ];
            rec.extend(row.metrics.values().iter().map(f64::to_string));
            rec.extend(row.differential.values().iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        Ok(w.into_inner().map_err(|e| e.into_error())?)
    }
}

/// Checks labels and algorithm/video compatibility up front.
fn validate(setup: &Setup) -> anyhow::Result<()> {
    anyhow::ensure!(!setup.videos.is_empty(), "evaluation needs at least one video");
    anyhow::ensure!(!setup.starts.is_empty(), "evaluation needs at least one start offset");
    let mut seen = std::collections::BTreeSet::from([OPTIMAL]);
    for a in &setup.algorithms {
        anyhow::ensure!(seen.insert(&a.label), "duplicate or reserved algorithm label {:?}", a.label);
    }
    for (name, video) in &setup.videos {
        for a in &setup.algorithms {
            a.logic(video)
                .map_err(|e| anyhow::Error::new(e).context(format!("algorithm {} on video {name}", a.label)))?;
        }
    }
    Ok(())
}

/// Runs the whole evaluation on `workers` threads. The result does not
/// depend on `workers`.
pub fn evaluate(setup: &Setup, workers: usize) -> anyhow::Result<Evaluation> {
    validate(setup)?;
    let logics = setup
        .videos
        .iter()
        .map(|(_, v)| setup.algorithms.iter().map(|a| a.logic(v)).collect::<hasopt_core::Result<Vec<_>>>())
        .collect::<hasopt_core::Result<Vec<_>>>()?;
    let pairs: Vec<(usize, u32)> = (0..setup.videos.len())
        .flat_map(|v| setup.starts.iter().map(move |&s| (v, s)))
        .collect();

    let run_pair = |&(v, start): &(usize, u32)| -> Result<Vec<(SessionMetrics, usize)>, String> {
        let video = &setup.videos[v].1;
        let cfg = setup.session.with_start(start);
        let opt = solve(video, &setup.trace, &cfg).map_err(|e| e.to_string())?;
        let mut out = vec![(optimal_metrics(&opt, video, &setup.trace, &cfg).map_err(|e| e.to_string())?, 0)];
        for logic in &logics[v] {
            let log = simulate(video, &setup.trace, &cfg, logic.as_ref()).map_err(|e| e.to_string())?;
            out.push((compute(&log, video), log.stall_events.len()));
        }
        Ok(out)
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
    let results: Vec<_> = pool.install(|| pairs.par_iter().map(run_pair).collect());

    let labels: Vec<&str> = std::iter::once(OPTIMAL)
        .chain(setup.algorithms.iter().map(|a| a.label.as_str()))
        .collect();
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for (&(v, start), result) in pairs.iter().zip(results) {
        let video = setup.videos[v].0.clone();
        match result {
            Ok(runs) => {
                let opt = runs[0].0;
                for (label, (metrics, stalls)) in labels.iter().zip(runs) {
                    rows.push(RunRow {
                        video: video.clone(),
                        start_s: start,
                        algorithm: label.to_string(),
                        stall_events: stalls,
                        metrics,
                        differential: differential(&metrics, &opt),
                    });
                }
            }
            Err(error) => failed.push(FailedPair { video, start_s: start, error }),
        }
    }

    let mut algorithms = Vec::new();
    if rows.is_empty() {
        anyhow::bail!("every (video, start) pair failed; first error: {}", failed[0].error);
    }
    for (k, label) in labels.iter().enumerate() {
        let mine: Vec<&RunRow> = rows.iter().skip(k).step_by(labels.len()).collect();
        let metrics: Vec<SessionMetrics> = mine.iter().map(|r| r.metrics).collect();
        let diffs: Vec<DifferentialMetrics> = mine.iter().map(|r| r.differential).collect();
        let stalled_runs = mine.iter().filter(|r| r.stall_events > 0).count();
        algorithms.push(AlgorithmSummary {
            label: label.to_string(),
            runs: mine.len(),
            stalled_runs,
            stalled_fraction: stalled_runs as f64 / mine.len() as f64,
            metrics: aggregate(&metrics)?,
            differential: if k == 0 { None } else { Some(aggregate(&diffs)?) },
        });
    }
    Ok(Evaluation {
        rows,
        summary: EvaluationSummary {
            metric_names: METRIC_NAMES,
            pairs: pairs.len(),
            failed_pairs: failed,
            algorithms,
        },
    })
}
