//! Session quality metrics, differences against the optimal path, and their
//! distributions over many runs.
//!
//! Per-minute rates are normalised by the video duration `n * tau`; the
//! stalling time ratio is the whole session (from the first request at
//! `t = 0` to the end of playback) over the video duration.

use serde::{Deserialize, Serialize};

use crate::domain::{SessionConfig, ThroughputTrace, Video};
use crate::error::{Error, Result};
use crate::optimizer::OptimalResult;
use crate::simulator::{stall_free_log, SessionLog};

pub const METRIC_NAMES: [&str; 5] = [
    "switching_frequency",
    "avg_quality",
    "avg_buffer_level_s",
    "stalling_frequency",
    "stalling_time_ratio",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    /// Switches per minute of video.
    pub switching_frequency: f64,
    pub avg_quality: f64,
    /// Time-weighted mean buffer level over the session.
    pub avg_buffer_level_s: f64,
    /// Stall events per minute of video.
    pub stalling_frequency: f64,
    /// Session duration over video duration.
    pub stalling_time_ratio: f64,
}

/// Algorithm metrics minus optimal-path metrics, field by field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifferentialMetrics {
    pub switching_frequency: f64,
    pub avg_quality: f64,
    pub avg_buffer_level_s: f64,
    pub stalling_frequency: f64,
    pub stalling_time_ratio: f64,
}

/// Access to the five metrics in [`METRIC_NAMES`] order.
pub trait MetricSet {
    fn values(&self) -> [f64; 5];
}

impl MetricSet for SessionMetrics {
    fn values(&self) -> [f64; 5] {
        [
            self.switching_frequency,
            self.avg_quality,
            self.avg_buffer_level_s,
            self.stalling_frequency,
            self.stalling_time_ratio,
        ]
    }
}

impl MetricSet for DifferentialMetrics {
    fn values(&self) -> [f64; 5] {
        [
            self.switching_frequency,
            self.avg_quality,
            self.avg_buffer_level_s,
            self.stalling_frequency,
            self.stalling_time_ratio,
        ]
    }
}

/// `integral_a^b (end - s) ds`
fn remaining_area(a: f64, b: f64, end: f64) -> f64 {
    ((end - a) * (end - a) - (end - b) * (end - b)) / 2.0
}

pub fn compute(log: &SessionLog, video: &Video) -> SessionMetrics {
    let n = log.decisions.len();
    let tau = log.segment_duration_s;
    let video_s = n as f64 * tau;
    let minutes = video_s / 60.0;
    let end = log.playout_end_s;

    let switches = log
        .decisions
        .windows(2)
        .filter(|w| w[0].level != w[1].level)
        .count();
    let quality_sum: usize = log.decisions.iter().map(|d| d.level).sum();
    debug_assert!(log.decisions.iter().all(|d| d.level <= video.r()));

    // buffer(t) = downloaded(t) - played(t); both integrals are exact.
    let downloaded: f64 = log
        .decisions
        .iter()
        .map(|d| tau * (end - d.download_end_s).max(0.0))
        .sum();
    let mut played = 0.0;
    let mut cursor = log.playout_start_s;
    for stall in &log.stall_events {
        played += remaining_area(cursor, stall.start_s, end);
        cursor = stall.end_s;
    }
    played += remaining_area(cursor, end, end);
    let avg_buffer = if end > 0.0 { (downloaded - played) / end } else { 0.0 };

    SessionMetrics {
        switching_frequency: switches as f64 / minutes,
        avg_quality: quality_sum as f64 / n as f64,
        avg_buffer_level_s: avg_buffer.max(0.0),
        stalling_frequency: log.stall_events.len() as f64 / minutes,
        stalling_time_ratio: end / video_s,
    }
}

/// Metrics of the optimal path's stall-free session, derived from its
/// deadlines rather than simulated.
pub fn optimal_metrics(
    opt: &OptimalResult,
    video: &Video,
    trace: &ThroughputTrace,
    cfg: &SessionConfig,
) -> Result<SessionMetrics> {
    Ok(compute(&stall_free_log(&opt.path, video, trace, cfg)?, video))
}

pub fn differential(algo: &SessionMetrics, opt: &SessionMetrics) -> DifferentialMetrics {
    DifferentialMetrics {
        switching_frequency: algo.switching_frequency - opt.switching_frequency,
        avg_quality: algo.avg_quality - opt.avg_quality,
        avg_buffer_level_s: algo.avg_buffer_level_s - opt.avg_buffer_level_s,
        stalling_frequency: algo.stalling_frequency - opt.stalling_frequency,
        stalling_time_ratio: algo.stalling_time_ratio - opt.stalling_time_ratio,
    }
}

/// Empirical distribution of one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    /// Sorted values; the support of the empirical CDF.
    pub values: Vec<f64>,
    pub median: f64,
    pub fraction_le_zero: f64,
}

impl Distribution {
    pub fn from_values(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("cannot summarise an empty set of runs"));
        }
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let median = if n % 2 == 1 {
            values[n / 2]
        } else {
            (values[n / 2 - 1] + values[n / 2]) / 2.0
        };
        let fraction_le_zero = values.iter().filter(|v| **v <= 0.0).count() as f64 / n as f64;
        Ok(Distribution {
            values,
            median,
            fraction_le_zero,
        })
    }

    /// Empirical CDF at `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.values.partition_point(|v| *v <= x) as f64 / self.values.len() as f64
    }
}

/// Per-metric distributions, keyed like [`METRIC_NAMES`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: usize,
    pub switching_frequency: Distribution,
    pub avg_quality: Distribution,
    pub avg_buffer_level_s: Distribution,
    pub stalling_frequency: Distribution,
    pub stalling_time_ratio: Distribution,
}

pub fn aggregate<M: MetricSet>(runs: &[M]) -> Result<Summary> {
    let column = |k: usize| Distribution::from_values(runs.iter().map(|m| m.values()[k]).collect());
    Ok(Summary {
        runs: runs.len(),
        switching_frequency: column(0)?,
        avg_quality: column(1)?,
        avg_buffer_level_s: column(2)?,
        stalling_frequency: column(3)?,
        stalling_time_ratio: column(4)?,
    })
}
