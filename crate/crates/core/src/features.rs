//! Scaled feature vectors for the imitation-learned policy, and training
//! corpora extracted from optimal paths.
//!
//! Layout, with `c_ot` throughput memory, `c_m` segment memory and `r` levels:
//!
//! | block | entries   | value                                                  |
//! |-------|-----------|--------------------------------------------------------|
//! | a     | 1         | sum of the last `c_ot` throughputs / `c_ot` / nu       |
//! | b     | `c_ot`    | last `c_ot` throughputs, oldest first, / nu            |
//! | c     | `c_m`     | last `c_m` chosen levels, oldest first, as `j / r`     |
//! | d     | `c_m`     | last `c_m` chosen segment sizes, oldest first, / nu    |
//! | e     | `c_m * r` | sizes of segments `i..i+c_m`, level-major per segment, / nu |
//! | f     | 1         | buffer level / `bl_max`                                |
//!
//! Missing history and segments past the end are 0; everything is clamped to
//! `[0, 1]`.

use std::io::{BufRead, Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{SessionConfig, ThroughputTrace, Video};
use crate::error::{Error, Result};
use crate::optimizer::solve;
use crate::simulator::{script_logic, simulate, PlayerStateView, SessionLog, ViewHistory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingContext {
    /// Shared scale of sizes (bytes) and throughputs (bytes/s).
    pub nu: f64,
    /// Buffer level scale in seconds.
    pub bl_max: f64,
    pub c_m: usize,
    pub c_ot: usize,
}

impl ScalingContext {
    pub const DEFAULT_BL_MAX: f64 = 20.0;
    pub const DEFAULT_MEMORY: usize = 30;

    pub fn with_nu(nu: f64) -> Self {
        ScalingContext {
            nu,
            bl_max: Self::DEFAULT_BL_MAX,
            c_m: Self::DEFAULT_MEMORY,
            c_ot: Self::DEFAULT_MEMORY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return Err(Error::invalid("nu must be positive"));
        }
        if !(self.bl_max.is_finite() && self.bl_max > 0.0) {
            return Err(Error::invalid("bl_max must be positive"));
        }
        if self.c_m == 0 || self.c_ot == 0 {
            return Err(Error::invalid("memory horizons must be at least 1"));
        }
        Ok(())
    }

    /// `1 + c_ot + c_m + c_m + c_m * r + 1`.
    pub fn feature_len(&self, r: usize) -> usize {
        1 + self.c_ot + 2 * self.c_m + self.c_m * r + 1
    }

    /// Column names in feature order.
    pub fn feature_names(&self, r: usize) -> Vec<String> {
        let mut names = Vec::with_capacity(self.feature_len(r));
        names.push("tp_avg".to_string());
        names.extend((0..self.c_ot).map(|k| format!("tp_mem_{k:02}")));
        names.extend((0..self.c_m).map(|k| format!("q_mem_{k:02}")));
        names.extend((0..self.c_m).map(|k| format!("s_mem_{k:02}")));
        for k in 0..self.c_m {
            names.extend((1..=r).map(|j| format!("fut_s{k:02}_l{j}")));
        }
        names.push("buffer".to_string());
        names
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    /// Zero-based class, `level - 1`.
    pub label: usize,
}

/// Copies the last `len` items of `src` into the tail of `dst`
/// (left-padded with zeros), scaled and clamped.
fn fill_memory<T: Copy>(dst: &mut [f64], src: &[T], scale: impl Fn(T) -> f64) {
    let len = dst.len();
    let take = src.len().min(len);
    let offset = len - take;
    for (slot, &x) in dst[offset..].iter_mut().zip(&src[src.len() - take..]) {
        *slot = scale(x).clamp(0.0, 1.0);
    }
}

/// Feature vector for the decision described by `view`.
pub fn extract(view: &PlayerStateView<'_>, video: &Video, ctx: &ScalingContext) -> Vec<f64> {
    let mut out = vec![0.0; ctx.feature_len(video.r())];
    extract_into(view, video, ctx, &mut out);
    out
}

/// [`extract`] into a caller-provided, correctly sized buffer.
pub fn extract_into(view: &PlayerStateView<'_>, video: &Video, ctx: &ScalingContext, out: &mut [f64]) {
    let r = video.r();
    let nu = ctx.nu;
    assert_eq!(out.len(), ctx.feature_len(r), "feature buffer length");
    out.fill(0.0);

    let (avg, rest) = out.split_at_mut(1);
    let (tp_mem, rest) = rest.split_at_mut(ctx.c_ot);
    let (q_mem, rest) = rest.split_at_mut(ctx.c_m);
    let (s_mem, rest) = rest.split_at_mut(ctx.c_m);
    let (future, buffer) = rest.split_at_mut(ctx.c_m * r);

    let tps = view.observed_throughputs;
    let recent = &tps[tps.len().saturating_sub(ctx.c_ot)..];
    avg[0] = (recent.iter().sum::<f64>() / ctx.c_ot as f64 / nu).clamp(0.0, 1.0);
    fill_memory(tp_mem, tps, |tp| tp / nu);
    fill_memory(q_mem, view.downloaded_levels, |j| j as f64 / r as f64);
    fill_memory(s_mem, view.downloaded_sizes, |s| s as f64 / nu);

    for (k, block) in future.chunks_mut(r).enumerate() {
        let Some(sizes) = view.future_sizes(k) else {
            break;
        };
        for (slot, &s) in block.iter_mut().zip(sizes) {
            *slot = (s as f64 / nu).clamp(0.0, 1.0);
        }
    }
    buffer[0] = (view.buffer_level_s / ctx.bl_max).clamp(0.0, 1.0);
}

/// Training samples and the scaling they were extracted with.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub samples: Vec<Sample>,
    pub ctx: ScalingContext,
    pub r: usize,
}

/// One solved and replayed (video, start) pair.
struct Replay {
    video: usize,
    log: SessionLog,
}

/// Solves every (video, start) pair, replays the optimal path and emits one
/// sample per decision, ordered by video, start and segment.
///
/// Without `ctx`, nu is the largest segment size or observed throughput in
/// the corpus, with default `bl_max` and memory horizons.
pub fn build_corpus(
    videos: &[Video],
    trace: &ThroughputTrace,
    starts: &[u32],
    cfg: &SessionConfig,
    ctx: Option<ScalingContext>,
) -> Result<Corpus> {
    let r = videos
        .first()
        .ok_or_else(|| Error::invalid("corpus needs at least one video"))?
        .r();
    if let Some(v) = videos.iter().find(|v| v.r() != r) {
        return Err(Error::RepresentationMismatch { model: r, video: v.r() });
    }
    if let Some(ctx) = &ctx {
        ctx.validate()?;
    }
    let pairs: Vec<(usize, u32)> = (0..videos.len())
        .flat_map(|v| starts.iter().map(move |&s| (v, s)))
        .collect();
    let replays = pairs
        .par_iter()
        .map(|&(v, start)| {
            let video = &videos[v];
            let cfg = cfg.with_start(start);
            let run = || -> Result<SessionLog> {
                let opt = solve(video, trace, &cfg)?;
                simulate(video, trace, &cfg, &script_logic(&opt.path, video)?)
            };
            run()
                .map(|log| Replay { video: v, log })
                .map_err(|e| Error::Pair {
                    video: v,
                    start_s: start,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;

    let ctx = match ctx {
        Some(ctx) => ctx,
        None => {
            let max_size = videos.iter().map(Video::max_size).max().unwrap_or(0) as f64;
            let max_tp = replays
                .iter()
                .flat_map(|rep| rep.log.decisions.iter().map(|d| d.observed_throughput))
                .fold(0.0, f64::max);
            let nu = max_size.max(max_tp);
            if nu <= 0.0 {
                return Err(Error::DegenerateCorpus("all sizes and throughputs are zero".into()));
            }
            ScalingContext::with_nu(nu)
        }
    };

    let samples = replays
        .par_iter()
        .flat_map_iter(|rep| {
            let video = &videos[rep.video];
            let mut history = ViewHistory::default();
            (1..=video.n())
                .map(|i| {
                    let view = rep.log.view_at(i, video, &mut history);
                    Sample {
                        features: extract(&view, video, &ctx),
                        label: rep.log.decisions[i - 1].level - 1,
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(Corpus { samples, ctx, r })
}

impl Corpus {
    /// CSV: a header of feature names plus `label`, then one row per sample.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = self.ctx.feature_names(self.r);
        header.push("label".into());
        out.write_record(&header)?;
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        for s in &self.samples {
            row.clear();
            row.extend(s.features.iter().map(|x| x.to_string()));
            row.push(s.label.to_string());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a corpus written by [`Corpus::write_csv`], checking its header
    /// against `ctx` and `r`.
    pub fn read_csv<R: Read>(reader: R, ctx: ScalingContext, r: usize) -> Result<Self> {
        ctx.validate()?;
        let mut rdr = csv::Reader::from_reader(std::io::BufReader::new(reader));
        let mut expected = ctx.feature_names(r);
        expected.push("label".into());
        let header = rdr.headers()?;
        if header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::invalid(
                "corpus header does not match the scaling context / level count",
            ));
        }
        let width = ctx.feature_len(r);
        let mut samples = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::invalid(format!("corpus row {}: bad {what}", row + 1));
            let features = rec
                .iter()
                .take(width)
                .map(|x| x.parse::<f64>().map_err(|_| bad("feature")))
                .collect::<Result<Vec<_>>>()?;
            let label: usize = rec[width].parse().map_err(|_| bad("label"))?;
            if label >= r {
                return Err(bad("label"));
            }
            samples.push(Sample { features, label });
        }
        Ok(Corpus { samples, ctx, r })
    }

    /// Number of levels recorded in a corpus header.
    pub fn levels_in_header<R: Read>(reader: R) -> Result<usize> {
        let mut first = String::new();
        std::io::BufReader::new(reader).read_line(&mut first)?;
        first
            .trim_end()
            .split(',')
            .filter_map(|c| c.strip_prefix("fut_s00_l"))
            .filter_map(|j| j.parse::<usize>().ok())
            .max()
            .ok_or_else(|| Error::invalid("corpus header has no future-size columns"))
    }
}
