//! Value types shared by every stage of the pipeline: the video manifest, the
//! goodput trace with its cumulative-volume queries, adaptation paths and the
//! session configuration.
//!
//! Volumes are bytes and rates are bytes/second throughout. Quality levels are
//! 1-based (`1..=r`).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One megabit per second in bytes per second.
pub const BYTES_PER_SEC_PER_MBPS: f64 = 125_000.0;

pub fn mbps_to_bytes_per_sec(mbps: f64) -> f64 {
    mbps * BYTES_PER_SEC_PER_MBPS
}

/// Segment size matrix of a VoD manifest: `n` segments, each available in `r`
/// representations of non-decreasing size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VideoFile", into = "VideoFile")]
pub struct Video {
    segment_duration_s: f64,
    n: usize,
    r: usize,
    /// Row-major `n x r`.
    sizes: Vec<u64>,
    level_nominal_rates: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct VideoFile {
    segment_duration_s: f64,
    sizes: Vec<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    level_nominal_rates: Option<Vec<f64>>,
}

impl TryFrom<VideoFile> for Video {
    type Error = Error;

    fn try_from(f: VideoFile) -> Result<Self> {
        let video = Video::new(f.segment_duration_s, f.sizes)?;
        match f.level_nominal_rates {
            Some(rates) => video.with_nominal_rates(rates),
            None => Ok(video),
        }
    }
}

impl From<Video> for VideoFile {
    fn from(v: Video) -> Self {
        VideoFile {
            segment_duration_s: v.segment_duration_s,
            sizes: v.sizes.chunks(v.r).map(<[u64]>::to_vec).collect(),
            level_nominal_rates: Some(v.level_nominal_rates),
        }
    }
}

impl Video {
    /// Builds a video from per-segment rows. Nominal level rates default to the
    /// average segment size of each level divided by the segment duration.
    pub fn new(segment_duration_s: f64, rows: Vec<Vec<u64>>) -> Result<Self> {
        if !(segment_duration_s.is_finite() && segment_duration_s > 0.0) {
            return Err(Error::invalid(format!(
                "segment duration must be positive, got {segment_duration_s}"
            )));
        }
        let n = rows.len();
        if n == 0 {
            return Err(Error::invalid("video has no segments"));
        }
        let r = rows[0].len();
        if r == 0 {
            return Err(Error::invalid("video has no representations"));
        }
        let mut sizes = Vec::with_capacity(n * r);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != r {
                return Err(Error::invalid(format!(
                    "segment {} has {} representations, expected {r}",
                    i + 1,
                    row.len()
                )));
            }
            if row.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::invalid(format!(
                    "segment {} sizes are not non-decreasing in representation index",
                    i + 1
                )));
            }
            sizes.extend(row);
        }
        let mut video = Video {
            segment_duration_s,
            n,
            r,
            sizes,
            level_nominal_rates: Vec::new(),
        };
        video.level_nominal_rates = (1..=r).map(|j| video.mean_level_rate(j)).collect();
        Ok(video)
    }

    pub fn with_nominal_rates(mut self, rates: Vec<f64>) -> Result<Self> {
        if rates.len() != self.r {
            return Err(Error::LengthMismatch {
                expected: self.r,
                got: rates.len(),
            });
        }
        if rates.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::invalid("nominal rates must be finite and non-negative"));
        }
        self.level_nominal_rates = rates;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn segment_duration_s(&self) -> f64 {
        self.segment_duration_s
    }

    /// Video duration `n * tau` in seconds.
    pub fn duration_s(&self) -> f64 {
        self.n as f64 * self.segment_duration_s
    }

    /// Size of segment `i` (1-based) at level `j` (1-based).
    #[inline]
    pub fn size(&self, i: usize, j: usize) -> u64 {
        debug_assert!((1..=self.n).contains(&i) && (1..=self.r).contains(&j));
        self.sizes[(i - 1) * self.r + (j - 1)]
    }

    /// All representation sizes of segment `i` (1-based).
    pub fn segment(&self, i: usize) -> &[u64] {
        &self.sizes[(i - 1) * self.r..i * self.r]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.sizes.chunks(self.r)
    }

    pub fn level_nominal_rates(&self) -> &[f64] {
        &self.level_nominal_rates
    }

    /// Average segment size of level `j` over the manifest divided by the
    /// segment duration.
    pub fn mean_level_rate(&self, j: usize) -> f64 {
        let total: u64 = (1..=self.n).map(|i| self.size(i, j)).sum();
        total as f64 / self.n as f64 / self.segment_duration_s
    }

    pub fn max_size(&self) -> u64 {
        self.sizes.iter().copied().max().unwrap_or(0)
    }

    pub fn to_json_writer<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn from_json_reader<R: Read>(r: R) -> Result<Self> {
        Ok(serde_json::from_reader(r)?)
    }
}

/// Goodput samples at 1 Hz, starting at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputTrace {
    samples: Vec<f64>,
}

impl ThroughputTrace {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("trace has no samples"));
        }
        if let Some((t, g)) = samples
            .iter()
            .enumerate()
            .find(|(_, g)| !g.is_finite() || **g < 0.0)
        {
            return Err(Error::invalid(format!("invalid goodput {g} at t = {t} s")));
        }
        if samples.iter().all(|g| *g == 0.0) {
            return Err(Error::invalid("trace delivers no data (all samples are zero)"));
        }
        Ok(ThroughputTrace { samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn duration_s(&self) -> u32 {
        self.samples.len() as u32
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// The trace as seen by a session starting at offset `start_s`.
    pub fn shifted(&self, start_s: u32) -> ShiftedTrace {
        ShiftedTrace::new(self, start_s)
    }

    /// CSV with header `t_s,goodput_Bps`, one row per second.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t_s", "goodput_Bps"])?;
        for (t, g) in self.samples.iter().enumerate() {
            out.write_record([t.to_string(), g.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "t_s" || &headers[1] != "goodput_Bps" {
            return Err(Error::invalid(format!(
                "expected header `t_s,goodput_Bps`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut samples = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let t: u64 = rec[0]
                .parse()
                .map_err(|_| Error::invalid(format!("row {}: bad time `{}`", row + 1, &rec[0])))?;
            if t != row as u64 {
                return Err(Error::invalid(format!(
                    "row {}: expected t_s = {row}, got {t}",
                    row + 1
                )));
            }
            let g: f64 = rec[1].parse().map_err(|_| {
                Error::invalid(format!("row {}: bad goodput `{}`", row + 1, &rec[1]))
            })?;
            samples.push(g);
        }
        ThroughputTrace::new(samples)
    }
}

/// A trace rotated to begin at a start offset, wrapping to offset 0 at the
/// end. Goodput is constant within each 1 s sample, so the cumulative volume
/// is continuous and piecewise linear.
#[derive(Debug, Clone)]
pub struct ShiftedTrace {
    rates: Vec<f64>,
    /// `cum[s]` = bytes delivered in the first `s` whole seconds of one cycle.
    cum: Vec<f64>,
}

impl ShiftedTrace {
    pub fn new(trace: &ThroughputTrace, start_s: u32) -> Self {
        let len = trace.samples.len();
        let start = start_s as usize % len;
        let rates: Vec<f64> = trace.samples[start..]
            .iter()
            .chain(&trace.samples[..start])
            .copied()
            .collect();
        let mut cum = Vec::with_capacity(len + 1);
        let mut acc = 0.0;
        cum.push(acc);
        for g in &rates {
            acc += g;
            cum.push(acc);
        }
        ShiftedTrace { rates, cum }
    }

    fn cycle_len(&self) -> usize {
        self.rates.len()
    }

    fn cycle_volume(&self) -> f64 {
        self.cum[self.rates.len()]
    }

    /// Goodput at session time `t`.
    pub fn rate_at(&self, t: f64) -> f64 {
        let len = self.cycle_len();
        let s = t.max(0.0).floor() as usize % len;
        self.rates[s]
    }

    /// `V(t)`: bytes deliverable in `[0, t]` of session time.
    pub fn volume(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let len = self.cycle_len();
        let whole = t.floor();
        let frac = t - whole;
        let whole = whole as usize;
        let cycles = whole / len;
        let s = whole % len;
        let mut v = self.cum[s] + frac * self.rates[s];
        if cycles > 0 {
            v += cycles as f64 * self.cycle_volume();
        }
        v
    }

    /// Whether `bytes` have been delivered by session time `t`.
    #[inline]
    pub fn delivered_by(&self, bytes: u64, t: f64) -> bool {
        bytes as f64 <= self.volume(t)
    }

    /// Largest whole byte count deliverable by `t`.
    pub fn capacity(&self, t: f64) -> u64 {
        self.volume(t).floor() as u64
    }

    /// `T(v)`: smallest `t` with `V(t) >= v`.
    pub fn time_for(&self, v: f64) -> Result<f64> {
        if v <= 0.0 {
            return Ok(0.0);
        }
        let total = self.cycle_volume();
        if total <= 0.0 {
            return Err(Error::UnboundedWait(v));
        }
        let len = self.cycle_len();
        let mut cycles = (v / total).ceil() - 1.0;
        if cycles < 0.0 {
            cycles = 0.0;
        }
        let mut rem = v - cycles * total;
        if rem > total {
            cycles += 1.0;
            rem -= total;
        }
        if rem <= 0.0 {
            // Rounding put v on the previous cycle boundary.
            cycles -= 1.0;
            rem = total;
        }
        // First second whose end reaches rem.
        let s = self.cum[1..].partition_point(|c| *c < rem).min(len - 1);
        let frac = ((rem - self.cum[s]) / self.rates[s]).clamp(0.0, 1.0);
        Ok(cycles * len as f64 + s as f64 + frac)
    }
}

/// `V(t)` for a session starting at `start_s` into `trace`.
pub fn cumulative_volume(trace: &ThroughputTrace, start_s: u32, t: f64) -> f64 {
    trace.shifted(start_s).volume(t)
}

/// `T(v)` for a session starting at `start_s` into `trace`.
pub fn inverse_time(trace: &ThroughputTrace, start_s: u32, v: f64) -> Result<f64> {
    trace.shifted(start_s).time_for(v)
}

/// One quality level (1-based) per segment.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AdaptationPath {
    levels: Vec<usize>,
}

impl AdaptationPath {
    pub fn new(levels: Vec<usize>, video: &Video) -> Result<Self> {
        let path = AdaptationPath { levels };
        path.validate(video)?;
        Ok(path)
    }

    pub(crate) fn from_levels_unchecked(levels: Vec<usize>) -> Self {
        AdaptationPath { levels }
    }

    pub fn validate(&self, video: &Video) -> Result<()> {
        if self.levels.len() != video.n() {
            return Err(Error::LengthMismatch {
                expected: video.n(),
                got: self.levels.len(),
            });
        }
        if let Some((i, j)) = self
            .levels
            .iter()
            .enumerate()
            .find(|(_, j)| !(1..=video.r()).contains(*j))
        {
            return Err(Error::invalid(format!(
                "segment {}: level {j} outside 1..={}",
                i + 1,
                video.r()
            )));
        }
        Ok(())
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Number of adjacent quality changes.
    pub fn switches(&self) -> usize {
        self.levels.windows(2).filter(|w| w[0] != w[1]).count()
    }

    /// Exact sum of quality levels.
    pub fn quality_sum(&self) -> u64 {
        self.levels.iter().map(|&j| j as u64).sum()
    }

    pub fn mean_quality(&self) -> f64 {
        self.quality_sum() as f64 / self.levels.len() as f64
    }

    /// Cumulative bytes after each segment.
    pub fn prefix_bytes(&self, video: &Video) -> Vec<u64> {
        self.levels
            .iter()
            .enumerate()
            .scan(0u64, |acc, (i, &j)| {
                *acc += video.size(i + 1, j);
                Some(*acc)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    /// `T_0`: playout starts no earlier than this.
    pub startup_delay_s: f64,
    /// `D` of the D-policy: a stall ends once this much video is buffered.
    pub rebuffer_target_s: f64,
    /// Offset into the trace where the session begins.
    pub trace_start_s: u32,
    /// Quality gap allowed when minimizing switches.
    pub epsilon: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            startup_delay_s: 5.0,
            rebuffer_target_s: 10.0,
            trace_start_s: 0,
            epsilon: 0.05,
        }
    }
}

impl SessionConfig {
    pub fn with_start(self, trace_start_s: u32) -> Self {
        SessionConfig {
            trace_start_s,
            ..self
        }
    }

    pub fn with_epsilon(self, epsilon: f64) -> Self {
        SessionConfig { epsilon, ..self }
    }

    pub fn validate(&self, video: &Video, trace: &ThroughputTrace) -> Result<()> {
        if !(self.startup_delay_s.is_finite() && self.startup_delay_s >= 0.0) {
            return Err(Error::invalid("startup delay must be finite and >= 0"));
        }
        if !(self.rebuffer_target_s.is_finite() && self.rebuffer_target_s >= 0.0) {
            return Err(Error::invalid("rebuffer target must be finite and >= 0"));
        }
        if !(self.epsilon >= 0.0 && self.epsilon <= video.r() as f64) {
            return Err(Error::invalid(format!(
                "epsilon {} outside [0, {}]",
                self.epsilon,
                video.r()
            )));
        }
        if self.trace_start_s >= trace.duration_s() {
            return Err(Error::invalid(format!(
                "trace start {} s beyond trace duration {} s",
                self.trace_start_s,
                trace.duration_s()
            )));
        }
        Ok(())
    }
}

/// `D_i = T_0 + (i - 1) * tau`, the playout start of segment `i` (1-based)
/// under uninterrupted playback.
pub fn deadline(i: usize, cfg: &SessionConfig, video: &Video) -> Result<f64> {
    if !(1..=video.n()).contains(&i) {
        return Err(Error::IndexOutOfRange { index: i, n: video.n() });
    }
    Ok(scheduled_playout(cfg.startup_delay_s, 1, i, video.segment_duration_s()))
}

/// Playout start of segment `k` when playback has been continuous since
/// segment `anchor_segment` started at `anchor_s`. The optimizer and the
/// simulator both go through here so their deadlines agree bit for bit.
#[inline]
pub(crate) fn scheduled_playout(anchor_s: f64, anchor_segment: usize, k: usize, tau: f64) -> f64 {
    anchor_s + (k - anchor_segment) as f64 * tau
}
