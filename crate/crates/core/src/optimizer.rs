//! Exact two-step optimal adaptation.
//!
//! Step 1 finds the largest mean quality `W_opt` reachable without stalling.
//! Step 2 finds the path with the fewest quality switches whose mean quality
//! is at least `W_opt - epsilon`.
//!
//! A path is stall-free iff for every `k` the bytes of segments `1..=k` fit in
//! the volume deliverable by that segment's deadline, `V(D_k)`. Byte sums are
//! integers, so every deadline reduces to an integer capacity `floor(V(D_k))`
//! and all feasibility checks are exact. Quality sums are kept as integers as
//! well; mean quality only appears at the API boundary.
//!
//! Ties in step 2 are broken by maximal quality sum, then by the
//! lexicographically smallest level sequence.

use serde::{Deserialize, Serialize};

use crate::domain::{deadline, AdaptationPath, SessionConfig, ShiftedTrace, ThroughputTrace, Video};
use crate::error::{Error, Result};

/// Largest number of candidate paths [`brute_force`] will enumerate.
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

/// Absorbs rounding in `n * epsilon` when turning the quality gap into an
/// integer bound.
const EPSILON_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ResultFile", into = "ResultFile")]
pub struct OptimalResult {
    pub path: AdaptationPath,
    /// Maximum stall-free mean quality (step 1).
    pub w_opt: f64,
    pub switches: usize,
    /// Mean quality of `path`.
    pub step2_mean_quality: f64,
}

#[derive(Serialize, Deserialize)]
struct ResultFile {
    levels: Vec<usize>,
    w_opt: f64,
    switches: usize,
    mean_quality: f64,
}

impl From<OptimalResult> for ResultFile {
    fn from(r: OptimalResult) -> Self {
        ResultFile {
            levels: r.path.levels().to_vec(),
            w_opt: r.w_opt,
            switches: r.switches,
            mean_quality: r.step2_mean_quality,
        }
    }
}

impl TryFrom<ResultFile> for OptimalResult {
    type Error = Error;

    fn try_from(f: ResultFile) -> Result<Self> {
        if f.levels.is_empty() || f.levels.contains(&0) {
            return Err(Error::invalid("levels must be non-empty and 1-based"));
        }
        let path = AdaptationPath::from_levels_unchecked(f.levels);
        if path.switches() != f.switches {
            return Err(Error::invalid(format!(
                "switch count {} does not match levels ({})",
                f.switches,
                path.switches()
            )));
        }
        Ok(OptimalResult {
            path,
            w_opt: f.w_opt,
            switches: f.switches,
            step2_mean_quality: f.mean_quality,
        })
    }
}

impl OptimalResult {
    fn from_path(path: AdaptationPath, w_opt: f64) -> Self {
        OptimalResult {
            switches: path.switches(),
            step2_mean_quality: path.mean_quality(),
            path,
            w_opt,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    /// `V(D_k) - sum_{i<=k} S_i` for each segment `k`.
    pub slacks: Vec<f64>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.slacks.iter().all(|s| *s >= 0.0)
    }

    /// First segment (1-based) with negative slack.
    pub fn first_violation(&self) -> Option<usize> {
        self.slacks.iter().position(|s| *s < 0.0).map(|k| k + 1)
    }
}

/// Per-segment byte capacities `floor(V(D_k))`.
fn capacities(video: &Video, trace: &ShiftedTrace, cfg: &SessionConfig) -> Result<Vec<u64>> {
    (1..=video.n())
        .map(|k| Ok(trace.capacity(deadline(k, cfg, video)?)))
        .collect()
}

/// Fails with the first deadline the all-lowest path misses. The all-lowest
/// path consumes the fewest bytes on every prefix, so it is feasible iff
/// anything is.
fn ensure_feasible(video: &Video, caps: &[u64], cfg: &SessionConfig) -> Result<()> {
    let mut bytes = 0u64;
    for (k, cap) in caps.iter().enumerate() {
        bytes += video.size(k + 1, 1);
        if bytes > *cap {
            return Err(Error::Infeasible {
                segment: k + 1,
                deadline_s: deadline(k + 1, cfg, video)?,
                excess_bytes: bytes - cap,
            });
        }
    }
    Ok(())
}

fn prepare(video: &Video, trace: &ThroughputTrace, cfg: &SessionConfig) -> Result<Vec<u64>> {
    cfg.validate(video, trace)?;
    let shifted = trace.shifted(cfg.trace_start_s);
    let caps = capacities(video, &shifted, cfg)?;
    ensure_feasible(video, &caps, cfg)?;
    Ok(caps)
}

/// Largest reachable quality sum. `best[q]` holds the fewest bytes that reach
/// quality sum `i + q` after `i` segments; smaller prefixes dominate because
/// every later constraint only bounds prefix bytes from above.
fn max_quality_sum(video: &Video, caps: &[u64]) -> u64 {
    let (n, r) = (video.n(), video.r());
    let mut best = vec![0u64];
    for i in 1..=n {
        let cap = caps[i - 1];
        let mut next = vec![u64::MAX; best.len() + r - 1];
        for (q, &bytes) in best.iter().enumerate() {
            if bytes == u64::MAX {
                continue;
            }
            for j in 1..=r {
                let b = bytes + video.size(i, j);
                let slot = &mut next[q + j - 1];
                if b <= cap && b < *slot {
                    *slot = b;
                }
            }
        }
        best = next;
    }
    let top = best
        .iter()
        .rposition(|b| *b != u64::MAX)
        .expect("all-lowest path is feasible");
    (n + top) as u64
}

/// Smallest admissible quality sum for a step-1 optimum and gap.
fn min_quality_sum(q_max: u64, n: usize, epsilon: f64) -> u64 {
    let bound = (q_max as f64 - epsilon * n as f64 - EPSILON_SLACK).ceil();
    (bound.max(n as f64) as u64).min(q_max)
}

/// Step 1: the maximal stall-free mean quality `W_opt`.
pub fn solve_step1(video: &Video, trace: &ThroughputTrace, cfg: &SessionConfig) -> Result<f64> {
    let caps = prepare(video, trace, cfg)?;
    Ok(max_quality_sum(video, &caps) as f64 / video.n() as f64)
}

/// Step 2: fewest switches subject to mean quality `>= w_opt - epsilon`.
pub fn solve_step2(
    video: &Video,
    trace: &ThroughputTrace,
    cfg: &SessionConfig,
    w_opt: f64,
) -> Result<OptimalResult> {
    let caps = prepare(video, trace, cfg)?;
    let n = video.n();
    let q_max = (w_opt * n as f64).round();
    if !(q_max >= n as f64 && q_max <= (n * video.r()) as f64) {
        return Err(Error::invalid(format!("w_opt {w_opt} outside [1, {}]", video.r())));
    }
    let q_min = min_quality_sum(q_max as u64, n, cfg.epsilon);
    let path = SwitchTable::build(video, &caps, q_min, q_max as u64)
        .best_path()
        .ok_or_else(|| {
            Error::invalid(format!(
                "no stall-free path reaches mean quality {w_opt} - {}",
                cfg.epsilon
            ))
        })?;
    Ok(OptimalResult::from_path(path, w_opt))
}

/// Both steps.
pub fn solve(video: &Video, trace: &ThroughputTrace, cfg: &SessionConfig) -> Result<OptimalResult> {
    let caps = prepare(video, trace, cfg)?;
    let n = video.n();
    let q_max = max_quality_sum(video, &caps);
    let q_min = min_quality_sum(q_max, n, cfg.epsilon);
    let path = SwitchTable::build(video, &caps, q_min, q_max)
        .best_path()
        .expect("the step-1 optimum itself satisfies the quality bound");
    Ok(OptimalResult::from_path(path, q_max as f64 / n as f64))
}

/// Pareto set of `(switches, byte allowance)`: strictly increasing in both.
type Frontier = Vec<(u32, u64)>;

/// Backward table over suffixes. For segment `i` at level `j` with `q` quality
/// still to collect from segments `i+1..=n`, the frontier lists, per switch
/// budget, the largest prefix byte count through segment `i` from which the
/// suffix can still be completed without missing a deadline.
struct SwitchTable<'a> {
    video: &'a Video,
    caps: &'a [u64],
    q_min: u64,
    /// `layers[i - 1]`, `i` in `1..=n`.
    layers: Vec<Layer>,
}

struct Layer {
    q_lo: u64,
    q_hi: u64,
    /// `cells[(j - 1) * width + (q - q_lo)]`
    cells: Vec<Frontier>,
}

impl Layer {
    fn width(&self) -> usize {
        (self.q_hi + 1).saturating_sub(self.q_lo) as usize
    }

    fn get(&self, j: usize, q: u64) -> Option<&Frontier> {
        if q < self.q_lo || q > self.q_hi {
            return None;
        }
        self.cells.get((j - 1) * self.width() + (q - self.q_lo) as usize)
    }
}

fn prune(mut cands: Vec<(u32, u64)>) -> Frontier {
    cands.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
    let mut out: Frontier = Vec::with_capacity(cands.len().min(8));
    for (s, b) in cands {
        if out.last().is_none_or(|&(_, best)| b > best) {
            out.push((s, b));
        }
    }
    out
}

/// Fewest switches among entries allowing at least `bytes`.
fn min_switches(frontier: &Frontier, bytes: u64) -> Option<u32> {
    let idx = frontier.partition_point(|&(_, b)| b < bytes);
    frontier.get(idx).map(|&(s, _)| s)
}

impl<'a> SwitchTable<'a> {
    fn build(video: &'a Video, caps: &'a [u64], q_min: u64, q_max: u64) -> Self {
        let (n, r) = (video.n(), video.r());
        let r64 = r as u64;
        let mut layers: Vec<Layer> = Vec::with_capacity(n);
        for i in (1..=n).rev() {
            let rest = (n - i) as u64;
            // Suffix quality is between `rest` and `r * rest`; the total must
            // land in [q_min, q_max] with segments 1..=i contributing i..=r*i.
            let q_lo = rest.max(q_min.saturating_sub(r64 * i as u64));
            let q_hi = (r64 * rest).min(q_max.saturating_sub(i as u64));
            let mut layer = Layer {
                q_lo,
                q_hi,
                cells: Vec::new(),
            };
            let width = layer.width();
            layer.cells = vec![Vec::new(); r * width];
            if i == n {
                if q_lo == 0 {
                    for j in 1..=r {
                        layer.cells[(j - 1) * width] = vec![(0, u64::MAX)];
                    }
                }
            } else {
                let next = layers.last().expect("layer i + 1 built");
                let cap = caps[i];
                for j in 1..=r {
                    for q in q_lo..=q_hi {
                        let mut cands = Vec::new();
                        for jn in 1..=r {
                            let Some(q_next) = q.checked_sub(jn as u64) else {
                                break;
                            };
                            let Some(f) = next.get(jn, q_next) else {
                                continue;
                            };
                            let size = video.size(i + 1, jn);
                            let switch = u32::from(jn != j);
                            for &(s, b) in f {
                                let allowed = b.min(cap);
                                if allowed >= size {
                                    cands.push((s + switch, allowed - size));
                                }
                            }
                        }
                        layer.cells[(j - 1) * width + (q - q_lo) as usize] = prune(cands);
                    }
                }
            }
            layers.push(layer);
        }
        layers.reverse();
        SwitchTable {
            video,
            caps,
            q_min,
            layers,
        }
    }

    fn best_path(&self) -> Option<AdaptationPath> {
        let video = self.video;
        let (n, r) = (video.n(), video.r());
        let first = &self.layers[0];

        // (switches, quality) of the optimum: fewest switches, then most quality.
        let mut target: Option<(u32, u64)> = None;
        for j in 1..=r {
            let size = video.size(1, j);
            if size > self.caps[0] {
                continue;
            }
            for q in first.q_lo..=first.q_hi {
                let total = q + j as u64;
                if total < self.q_min {
                    continue;
                }
                let Some(s) = first.get(j, q).and_then(|f| min_switches(f, size)) else {
                    continue;
                };
                let better = match target {
                    None => true,
                    Some((bs, bq)) => s < bs || (s == bs && total > bq),
                };
                if better {
                    target = Some((s, total));
                }
            }
        }
        let (mut switches_left, mut quality_left) = target?;

        // Lexicographically smallest path achieving exactly that target.
        let mut levels = Vec::with_capacity(n);
        let mut bytes = 0u64;
        for i in 1..=n {
            let layer = &self.layers[i - 1];
            let prev = levels.last().copied();
            let chosen = (1..=r).find(|&j| {
                let b = bytes + video.size(i, j);
                if b > self.caps[i - 1] {
                    return false;
                }
                let switch = u32::from(prev.is_some_and(|p| p != j));
                let (Some(budget), Some(q)) = (
                    switches_left.checked_sub(switch),
                    quality_left.checked_sub(j as u64),
                ) else {
                    return false;
                };
                layer
                    .get(j, q)
                    .and_then(|f| min_switches(f, b))
                    .is_some_and(|s| s <= budget)
            })?;
            bytes += video.size(i, chosen);
            if prev.is_some_and(|p| p != chosen) {
                switches_left -= 1;
            }
            quality_left -= chosen as u64;
            levels.push(chosen);
        }
        debug_assert_eq!(quality_left, 0);
        Some(AdaptationPath::from_levels_unchecked(levels))
    }
}

/// Exhaustive search over all `r^n` paths with the same objective and
/// tie-breaks as [`solve`]. Only for verification.
pub fn brute_force(video: &Video, trace: &ThroughputTrace, cfg: &SessionConfig) -> Result<OptimalResult> {
    let (n, r) = (video.n(), video.r());
    let size = (r as f64).powi(n as i32);
    if size > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            size,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    cfg.validate(video, trace)?;
    let volumes: Vec<f64> = (1..=n)
        .map(|k| {
            let d = cfg.startup_delay_s + (k - 1) as f64 * video.segment_duration_s();
            crate::domain::cumulative_volume(trace, cfg.trace_start_s, d)
        })
        .collect();
    let feasible = |levels: &[usize]| {
        let mut bytes = 0u64;
        levels.iter().enumerate().all(|(i, &j)| {
            bytes += video.size(i + 1, j);
            bytes as f64 <= volumes[i]
        })
    };

    let mut candidates: Vec<Vec<usize>> = Vec::new();
    let mut levels = vec![1usize; n];
    loop {
        if feasible(&levels) {
            candidates.push(levels.clone());
        }
        // odometer in lexicographic order
        let Some(pos) = levels.iter().rposition(|&j| j < r) else {
            break;
        };
        levels[pos] += 1;
        for l in &mut levels[pos + 1..] {
            *l = 1;
        }
    }
    if candidates.is_empty() {
        let lowest = AdaptationPath::from_levels_unchecked(vec![1; n]);
        let report = check_feasibility(&lowest, video, trace, cfg)?;
        let k = report.first_violation().expect("all-lowest path is infeasible");
        return Err(Error::Infeasible {
            segment: k,
            deadline_s: deadline(k, cfg, video)?,
            excess_bytes: (-report.slacks[k - 1]).ceil() as u64,
        });
    }

    let mean = |l: &[usize]| l.iter().sum::<usize>() as f64 / n as f64;
    let switches = |l: &[usize]| l.windows(2).filter(|w| w[0] != w[1]).count();
    let w_opt = candidates.iter().map(|l| mean(l)).fold(f64::MIN, f64::max);
    let mut best: Option<&Vec<usize>> = None;
    for cand in candidates.iter().filter(|l| mean(l) >= w_opt - cfg.epsilon - EPSILON_SLACK) {
        let better = match best {
            None => true,
            Some(b) => {
                let (cs, bs) = (switches(cand), switches(b));
                cs < bs || (cs == bs && mean(cand) > mean(b))
            }
        };
        if better {
            best = Some(cand);
        }
    }
    let path = AdaptationPath::from_levels_unchecked(best.expect("w_opt path qualifies").clone());
    Ok(OptimalResult::from_path(path, w_opt))
}

/// Per-segment slack of `path` against its deadlines.
pub fn check_feasibility(
    path: &AdaptationPath,
    video: &Video,
    trace: &ThroughputTrace,
    cfg: &SessionConfig,
) -> Result<FeasibilityReport> {
    path.validate(video)?;
    let shifted = trace.shifted(cfg.trace_start_s);
    let slacks = path
        .prefix_bytes(video)
        .into_iter()
        .enumerate()
        .map(|(k, bytes)| Ok(shifted.volume(deadline(k + 1, cfg, video)?) - bytes as f64))
        .collect::<Result<_>>()?;
    Ok(FeasibilityReport { slacks })
}

/// `(1/2) * sum_i sum_j (x_ij - x_{i+1,j})^2` over the one-hot encoding of
/// `levels`.
pub fn quadratic_switch_objective(levels: &[usize], r: usize) -> f64 {
    let one_hot = |level: usize| (1..=r).map(move |j| f64::from(u8::from(j == level)));
    levels
        .windows(2)
        .map(|w| {
            one_hot(w[0])
                .zip(one_hot(w[1]))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum::<f64>()
        / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_trace(rate: f64, len: usize) -> ThroughputTrace {
        ThroughputTrace::new(vec![rate; len]).unwrap()
    }

    #[test]
    fn unconstrained_trace_gives_top_level() {
        let video = Video::new(1.0, vec![vec![10, 20, 30]; 6]).unwrap();
        let trace = flat_trace(1e6, 20);
        let cfg = SessionConfig::default().with_epsilon(0.0);
        assert_eq!(solve_step1(&video, &trace, &cfg).unwrap(), 3.0);
        let res = solve(&video, &trace, &cfg).unwrap();
        assert_eq!(res.path.levels(), &[3; 6]);
        assert_eq!(res.switches, 0);
    }

    #[test]
    fn single_segment_only_lowest_fits() {
        let video = Video::new(1.0, vec![vec![10, 100]]).unwrap();
        // V(D_1) = V(5) = 50
        let trace = flat_trace(10.0, 10);
        let cfg = SessionConfig::default();
        assert_eq!(solve_step1(&video, &trace, &cfg).unwrap(), 1.0);
        assert_eq!(brute_force(&video, &trace, &cfg).unwrap().path.levels(), &[1]);
    }

    #[test]
    fn infeasible_reports_first_deadline() {
        let video = Video::new(1.0, vec![vec![10], vec![100]]).unwrap();
        let trace = flat_trace(10.0, 10);
        let cfg = SessionConfig::default();
        for err in [
            solve(&video, &trace, &cfg).unwrap_err(),
            brute_force(&video, &trace, &cfg).unwrap_err(),
        ] {
            match err {
                Error::Infeasible {
                    segment,
                    deadline_s,
                    excess_bytes,
                } => {
                    assert_eq!(segment, 2);
                    assert_eq!(deadline_s, 6.0);
                    assert_eq!(excess_bytes, 50);
                }
                e => panic!("unexpected {e}"),
            }
        }
    }

    #[test]
    fn brute_force_guard() {
        let video = Video::new(1.0, vec![vec![1, 2, 3, 4, 5]; 11]).unwrap();
        let trace = flat_trace(100.0, 20);
        assert!(matches!(
            brute_force(&video, &trace, &SessionConfig::default()),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn epsilon_bound_is_integer_exact() {
        assert_eq!(min_quality_sum(1000, 200, 0.05), 990);
        assert_eq!(min_quality_sum(10, 4, 0.5), 8);
        assert_eq!(min_quality_sum(10, 4, 0.0), 10);
        assert_eq!(min_quality_sum(10, 4, 3.0), 4);
    }

    #[test]
    fn feasibility_report() {
        let video = Video::new(1.0, vec![vec![10, 100]; 3]).unwrap();
        let trace = flat_trace(10.0, 10);
        let cfg = SessionConfig::default();
        let low = AdaptationPath::new(vec![1, 1, 1], &video).unwrap();
        let rep = check_feasibility(&low, &video, &trace, &cfg).unwrap();
        assert_eq!(rep.slacks, vec![40.0, 40.0, 40.0]);
        assert!(rep.is_feasible());
        let high = AdaptationPath::new(vec![2, 1, 1], &video).unwrap();
        let rep = check_feasibility(&high, &video, &trace, &cfg).unwrap();
        assert!(rep.slacks[0] < 0.0);
        assert_eq!(rep.first_violation(), Some(1));
        let short = AdaptationPath::from_levels_unchecked(vec![1]);
        assert!(check_feasibility(&short, &video, &trace, &cfg).is_err());
    }

    #[test]
    fn quadratic_objective_counts_switches() {
        assert_eq!(quadratic_switch_objective(&[1, 1], 3), 0.0);
        assert_eq!(quadratic_switch_objective(&[1, 3], 3), 1.0);
        assert_eq!(quadratic_switch_objective(&[1, 2, 2, 3, 1], 3), 3.0);
    }

    #[test]
    fn result_json_format() {
        let video = Video::new(1.0, vec![vec![10, 20]; 3]).unwrap();
        let res = OptimalResult::from_path(AdaptationPath::new(vec![1, 2, 2], &video).unwrap(), 2.0);
        let json = serde_json::to_string(&res).unwrap();
        assert_eq!(
            json,
            r#"{"levels":[1,2,2],"w_opt":2.0,"switches":1,"mean_quality":1.6666666666666667}"#
        );
        let back: OptimalResult = serde_json::from_str(&json).unwrap();
        assert_eq!(back, res);
    }
}
