//! Fixed workloads shared by the benchmarks.

use hasopt_core::{
    generate_trace, generate_video, SessionConfig, ThroughputTrace, TraceSpec, Video, VideoSpec,
};

/// Reference five-level video with `n` one-second segments.
pub fn video(n: usize) -> Video {
    generate_video(&VideoSpec::reference(n, 7)).expect("reference video")
}

/// The 720 s mobile goodput trace.
pub fn trace() -> ThroughputTrace {
    generate_trace(&TraceSpec::mobile(1)).expect("mobile trace")
}

pub fn session(start: u32) -> SessionConfig {
    SessionConfig::default().with_start(start)
}
