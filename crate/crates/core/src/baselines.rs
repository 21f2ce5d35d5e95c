//! Threshold-based reference logics: a conservative smoothed-rate family and
//! an aggressive last-sample rate matcher. Neither keeps state between
//! decisions; all history arrives through the view.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::{AdaptationLogic, PlayerStateView};
use crate::domain::Video;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateBasedConfig {
    pub safety_factor: f64,
    pub smoothing_window: usize,
    pub upswitch_min_buffer_s: f64,
}

impl Default for RateBasedConfig {
    fn default() -> Self {
        RateBasedConfig {
            safety_factor: 0.9,
            smoothing_window: 5,
            upswitch_min_buffer_s: 10.0,
        }
    }
}

impl RateBasedConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.safety_factor > 0.0 && self.safety_factor <= 1.0) {
            return Err(Error::invalid(format!(
                "safety factor {} outside (0, 1]",
                self.safety_factor
            )));
        }
        if self.smoothing_window == 0 {
            return Err(Error::invalid("smoothing window must be at least 1"));
        }
        if !(self.upswitch_min_buffer_s.is_finite() && self.upswitch_min_buffer_s >= 0.0) {
            return Err(Error::invalid("up-switch buffer threshold must be >= 0"));
        }
        Ok(())
    }
}

/// Conservative logic: smoothed throughput against average level rates, with
/// buffer-gated single-step up-switches and damped down-switches.
#[derive(Debug, Clone)]
pub struct RateBased {
    cfg: RateBasedConfig,
    /// Average segment size of each level over the manifest divided by tau.
    level_rates: Vec<f64>,
}

pub fn rate_based_logic(cfg: RateBasedConfig, video: &Video) -> Result<RateBased> {
    cfg.validate()?;
    Ok(RateBased {
        cfg,
        level_rates: (1..=video.r()).map(|j| video.mean_level_rate(j)).collect(),
    })
}

impl AdaptationLogic for RateBased {
    fn decide(&self, view: &PlayerStateView<'_>) -> usize {
        let history = view.observed_throughputs;
        let Some(prev) = view.last_level() else {
            return 1;
        };
        let window = &history[history.len().saturating_sub(self.cfg.smoothing_window)..];
        let estimate = self.cfg.safety_factor * window.iter().sum::<f64>() / window.len() as f64;
        let target = self
            .level_rates
            .iter()
            .rposition(|rate| *rate <= estimate)
            .map_or(1, |j| j + 1);
        let buffer = view.buffer_level_s;
        if target > prev {
            if buffer >= self.cfg.upswitch_min_buffer_s {
                prev + 1
            } else {
                prev
            }
        } else if target < prev {
            if buffer < 0.5 * self.cfg.upswitch_min_buffer_s {
                target
            } else {
                prev - 1
            }
        } else {
            prev
        }
    }
}

/// Aggressive logic: highest level whose next segment downloads within one
/// segment duration at the last observed throughput.
#[derive(Debug, Clone, Default)]
pub struct Aggressive;

pub fn aggressive_logic(_video: &Video) -> Aggressive {
    Aggressive
}

impl AdaptationLogic for Aggressive {
    fn decide(&self, view: &PlayerStateView<'_>) -> usize {
        let (Some(&tp), Some(sizes)) = (view.observed_throughputs.last(), view.future_sizes(0)) else {
            return 1;
        };
        let tau = view.video.segment_duration_s();
        sizes
            .iter()
            .rposition(|&s| s as f64 / tau <= tp)
            .map_or(1, |j| j + 1)
    }
}
