//! Deterministic playback simulation of one streaming client.
//!
//! Downloads run back to back from `t = 0` with an unlimited buffer. Playout
//! begins at `T_0`, or once the first segment has arrived if that is later.
//! When the segment due next has not arrived, playback stalls until `D`
//! seconds of video are buffered or the last segment has arrived (D-policy).
//!
//! Download completions come from the inverse cumulative volume of the
//! cumulative byte count, and "has segment k arrived by its playout time" is
//! decided by comparing the same cumulative byte count against `V(t)`, which
//! is exactly the optimizer's deadline test. A stall-free path therefore
//! replays without stalls.

use serde::{Deserialize, Serialize, Serializer};

use crate::domain::{scheduled_playout, AdaptationPath, SessionConfig, ShiftedTrace, ThroughputTrace, Video};
use crate::error::{Error, Result};

/// Everything an adaptation logic may look at when choosing the level of
/// the next segment.
#[derive(Debug, Clone, Copy)]
pub struct PlayerStateView<'a> {
    /// Segment about to be requested, 1-based.
    pub segment_index: usize,
    /// Seconds of downloaded, unplayed video at decision time.
    pub buffer_level_s: f64,
    pub now_s: f64,
    /// Levels of segments `1..segment_index`.
    pub downloaded_levels: &'a [usize],
    /// Bytes of segments `1..segment_index`.
    pub downloaded_sizes: &'a [u64],
    /// Goodput of each completed download, bytes per second.
    pub observed_throughputs: &'a [f64],
    pub video: &'a Video,
}

impl<'a> PlayerStateView<'a> {
    /// Sizes of segment `segment_index + k` for `k >= 0`, if it exists.
    pub fn future_sizes(&self, k: usize) -> Option<&'a [u64]> {
        let i = self.segment_index + k;
        (i <= self.video.n()).then(|| self.video.segment(i))
    }

    pub fn last_level(&self) -> Option<usize> {
        self.downloaded_levels.last().copied()
    }
}

/// Chooses the quality level (1-based) of the next segment.
///
/// Implementations must be deterministic functions of the view.
pub trait AdaptationLogic: Send + Sync {
    fn decide(&self, view: &PlayerStateView<'_>) -> usize;
}

impl<T: AdaptationLogic + ?Sized> AdaptationLogic for Box<T> {
    fn decide(&self, view: &PlayerStateView<'_>) -> usize {
        (**self).decide(view)
    }
}

impl<T: AdaptationLogic + ?Sized> AdaptationLogic for &T {
    fn decide(&self, view: &PlayerStateView<'_>) -> usize {
        (**self).decide(view)
    }
}

/// Replays a fixed path.
#[derive(Debug, Clone)]
pub struct ScriptedLogic {
    levels: Vec<usize>,
}

impl AdaptationLogic for ScriptedLogic {
    fn decide(&self, view: &PlayerStateView<'_>) -> usize {
        self.levels[view.segment_index - 1]
    }
}

pub fn script_logic(path: &AdaptationPath, video: &Video) -> Result<ScriptedLogic> {
    path.validate(video)?;
    Ok(ScriptedLogic {
        levels: path.levels().to_vec(),
    })
}

fn micros<S: Serializer>(t: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64((t * 1e6).round() / 1e6)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    #[serde(serialize_with = "micros")]
    pub decision_time_s: f64,
    pub level: usize,
    pub size_bytes: u64,
    #[serde(serialize_with = "micros")]
    pub buffer_level_s: f64,
    #[serde(serialize_with = "micros")]
    pub download_start_s: f64,
    #[serde(serialize_with = "micros")]
    pub download_end_s: f64,
    /// Bytes per second.
    pub observed_throughput: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stall {
    #[serde(serialize_with = "micros")]
    pub start_s: f64,
    #[serde(serialize_with = "micros")]
    pub end_s: f64,
}

impl Stall {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub segment_duration_s: f64,
    pub decisions: Vec<Decision>,
    pub stall_events: Vec<Stall>,
    #[serde(serialize_with = "micros")]
    pub playout_start_s: f64,
    #[serde(serialize_with = "micros")]
    pub playout_end_s: f64,
}

impl SessionLog {
    pub fn levels(&self) -> impl Iterator<Item = usize> + '_ {
        self.decisions.iter().map(|d| d.level)
    }

    pub fn path(&self) -> AdaptationPath {
        AdaptationPath::from_levels_unchecked(self.levels().collect())
    }

    pub fn total_stall_s(&self) -> f64 {
        self.stall_events.iter().map(Stall::duration_s).sum()
    }

    /// Player state at decision `i` (1-based), rebuilt from the log.
    /// `scratch` receives the history slices the view borrows.
    pub fn view_at<'a>(
        &self,
        i: usize,
        video: &'a Video,
        scratch: &'a mut ViewHistory,
    ) -> PlayerStateView<'a> {
        let d = &self.decisions[i - 1];
        scratch.levels.clear();
        scratch.sizes.clear();
        scratch.throughputs.clear();
        for prev in &self.decisions[..i - 1] {
            scratch.levels.push(prev.level);
            scratch.sizes.push(prev.size_bytes);
            scratch.throughputs.push(prev.observed_throughput);
        }
        PlayerStateView {
            segment_index: i,
            buffer_level_s: d.buffer_level_s,
            now_s: d.decision_time_s,
            downloaded_levels: &scratch.levels,
            downloaded_sizes: &scratch.sizes,
            observed_throughputs: &scratch.throughputs,
            video,
        }
    }
}

/// Reusable storage for [`SessionLog::view_at`].
#[derive(Debug, Default)]
pub struct ViewHistory {
    levels: Vec<usize>,
    sizes: Vec<u64>,
    throughputs: Vec<f64>,
}

/// Playout schedule built incrementally as segments arrive.
struct Playout<'a> {
    trace: &'a ShiftedTrace,
    tau: f64,
    n: usize,
    startup_delay_s: f64,
    /// Segments of buffered video needed to end a stall.
    resume_segments: usize,
    /// Playout start of each scheduled segment.
    starts: Vec<f64>,
    anchor_s: f64,
    anchor_segment: usize,
    /// Segment and time of an unresolved stall.
    pending_stall: Option<(usize, f64)>,
    stalls: Vec<Stall>,
}

impl<'a> Playout<'a> {
    fn new(trace: &'a ShiftedTrace, video: &Video, cfg: &SessionConfig) -> Self {
        let tau = video.segment_duration_s();
        let resume_segments = ((cfg.rebuffer_target_s / tau).ceil() as usize).max(1);
        Playout {
            trace,
            tau,
            n: video.n(),
            startup_delay_s: cfg.startup_delay_s,
            resume_segments,
            starts: Vec::with_capacity(video.n()),
            anchor_s: 0.0,
            anchor_segment: 1,
            pending_stall: None,
            stalls: Vec::new(),
        }
    }

    /// Extends the schedule as far as segments `1..=prefix.len()` (arrived,
    /// with cumulative bytes `prefix` and completion times `ends`) determine
    /// it. Later segments have not arrived before `now`.
    fn advance(&mut self, prefix: &[u64], ends: &[f64], now: f64) {
        let known = prefix.len();
        loop {
            let k = self.starts.len() + 1;
            if k > self.n {
                return;
            }
            if let Some((stalled, since)) = self.pending_stall {
                let needed = (stalled - 1 + self.resume_segments).min(self.n);
                if needed > known {
                    return;
                }
                let resume = ends[needed - 1].max(since);
                self.stalls.push(Stall {
                    start_s: since,
                    end_s: resume,
                });
                self.pending_stall = None;
                self.anchor_s = resume;
                self.anchor_segment = stalled;
                self.starts.push(resume);
                continue;
            }
            if k == 1 {
                if known == 0 {
                    return;
                }
                let t0 = self.startup_delay_s;
                let start = if self.trace.delivered_by(prefix[0], t0) {
                    t0
                } else {
                    ends[0].max(t0)
                };
                self.anchor_s = start;
                self.anchor_segment = 1;
                self.starts.push(start);
                continue;
            }
            let due = scheduled_playout(self.anchor_s, self.anchor_segment, k, self.tau);
            if k <= known {
                if self.trace.delivered_by(prefix[k - 1], due) {
                    self.starts.push(due);
                } else {
                    self.pending_stall = Some((k, due));
                }
            } else if due < now {
                self.pending_stall = Some((k, due));
            } else {
                return;
            }
        }
    }

}

/// Seconds of video played by `t`, given the playout starts of the
/// scheduled segments in order.
fn played_seconds(starts: &[f64], tau: f64, t: f64) -> f64 {
    let done = starts.partition_point(|s| s + tau <= t);
    let partial: f64 = starts[done..].iter().map(|s| (t - s).clamp(0.0, tau)).sum();
    done as f64 * tau + partial
}

fn throughput(size: u64, start: f64, end: f64, trace: &ShiftedTrace) -> f64 {
    let duration = end - start;
    if duration > 0.0 {
        size as f64 / duration
    } else {
        trace.rate_at(start)
    }
}

/// Runs one session of `logic` over `video` and `trace`.
pub fn simulate(
    video: &Video,
    trace: &ThroughputTrace,
    cfg: &SessionConfig,
    logic: &dyn AdaptationLogic,
) -> Result<SessionLog> {
    cfg.validate(video, trace)?;
    let shifted = trace.shifted(cfg.trace_start_s);
    let (n, r, tau) = (video.n(), video.r(), video.segment_duration_s());

    let mut playout = Playout::new(&shifted, video, cfg);
    let mut levels = Vec::with_capacity(n);
    let mut sizes = Vec::with_capacity(n);
    let mut throughputs = Vec::with_capacity(n);
    let mut prefix = Vec::with_capacity(n);
    let mut ends = Vec::with_capacity(n);
    let mut decisions = Vec::with_capacity(n);
    let mut bytes = 0u64;
    let mut now = 0.0;

    for i in 1..=n {
        playout.advance(&prefix, &ends, now);
        let buffer = ((i - 1) as f64 * tau - played_seconds(&playout.starts, tau, now)).max(0.0);
        let view = PlayerStateView {
            segment_index: i,
            buffer_level_s: buffer,
            now_s: now,
            downloaded_levels: &levels,
            downloaded_sizes: &sizes,
            observed_throughputs: &throughputs,
            video,
        };
        let level = logic.decide(&view);
        if !(1..=r).contains(&level) {
            return Err(Error::ProtocolViolation { segment: i, level, r });
        }
        let size = video.size(i, level);
        bytes += size;
        let end = shifted.time_for(bytes as f64)?.max(now);
        let tp = throughput(size, now, end, &shifted);
        decisions.push(Decision {
            decision_time_s: now,
            level,
            size_bytes: size,
            buffer_level_s: buffer,
            download_start_s: now,
            download_end_s: end,
            observed_throughput: tp,
        });
        levels.push(level);
        sizes.push(size);
        throughputs.push(tp);
        prefix.push(bytes);
        ends.push(end);
        now = end;
    }
    playout.advance(&prefix, &ends, f64::INFINITY);
    debug_assert_eq!(playout.starts.len(), n);
    Ok(SessionLog {
        segment_duration_s: tau,
        decisions,
        stall_events: playout.stalls,
        playout_start_s: playout.starts[0],
        playout_end_s: playout.starts[n - 1] + tau,
    })
}

/// The session a stall-free path produces, built directly from its
/// deadlines without running the event loop.
pub fn stall_free_log(
    path: &AdaptationPath,
    video: &Video,
    trace: &ThroughputTrace,
    cfg: &SessionConfig,
) -> Result<SessionLog> {
    path.validate(video)?;
    let shifted = trace.shifted(cfg.trace_start_s);
    let tau = video.segment_duration_s();
    let n = video.n();
    let prefix = path.prefix_bytes(video);
    let mut decisions = Vec::with_capacity(n);
    let mut starts = Vec::with_capacity(n);
    let mut start = 0.0;
    for (k, (&level, &bytes)) in path.levels().iter().zip(&prefix).enumerate() {
        let due = scheduled_playout(cfg.startup_delay_s, 1, k + 1, tau);
        if !shifted.delivered_by(bytes, due) {
            return Err(Error::invalid(format!(
                "path misses the deadline of segment {}",
                k + 1
            )));
        }
        let size = video.size(k + 1, level);
        let end = shifted.time_for(bytes as f64)?.max(start);
        // segments 1..=k are downloaded and play from T_0 uninterrupted
        let played = played_seconds(&starts, tau, start);
        decisions.push(Decision {
            decision_time_s: start,
            level,
            size_bytes: size,
            buffer_level_s: (k as f64 * tau - played).max(0.0),
            download_start_s: start,
            download_end_s: end,
            observed_throughput: throughput(size, start, end, &shifted),
        });
        starts.push(due);
        start = end;
    }
    Ok(SessionLog {
        segment_duration_s: tau,
        decisions,
        stall_events: Vec::new(),
        playout_start_s: cfg.startup_delay_s,
        playout_end_s: scheduled_playout(cfg.startup_delay_s, 1, n, tau) + tau,
    })
}
