//! Optimal quality adaptation for segmented video streaming, a deterministic
//! playback simulator, threshold baselines, and a small neural-network policy
//! trained to imitate the optimal paths.

pub mod baselines;
pub mod domain;
pub mod error;
pub mod features;
pub mod metrics;
pub mod mlp;
pub mod optimizer;
pub mod simulator;
pub mod workload;

pub use domain::{
    cumulative_volume, deadline, inverse_time, mbps_to_bytes_per_sec, AdaptationPath,
    SessionConfig, ShiftedTrace, ThroughputTrace, Video,
};
pub use error::{Error, Result};
pub use features::{build_corpus, extract, Corpus, Sample, ScalingContext};
pub use metrics::{aggregate, compute, differential, optimal_metrics, DifferentialMetrics, SessionMetrics};
pub use mlp::{as_logic, gradient_check, train, train_corpus, MlpModel, TrainConfig, TrainReport};
pub use optimizer::{brute_force, check_feasibility, solve, solve_step1, solve_step2, OptimalResult};
pub use simulator::{script_logic, simulate, AdaptationLogic, PlayerStateView, SessionLog};
pub use workload::{generate_trace, generate_video, TraceSpec, VideoSpec};
