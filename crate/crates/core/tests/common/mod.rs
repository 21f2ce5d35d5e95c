#![allow(dead_code)]

use hasopt_core::{SessionConfig, ThroughputTrace, Video};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small random instance: `n <= max_n`, `r <= max_r`, short trace, random
/// start-up delay and offset. Roughly half of them are tight enough that some
/// level choices miss deadlines.
pub fn random_instance(seed: u64, max_n: usize, max_r: usize) -> (Video, ThroughputTrace, SessionConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_n);
    let r = rng.random_range(1..=max_r);
    let rows = (0..n)
        .map(|_| {
            let mut row: Vec<u64> = (0..r).map(|_| rng.random_range(1..=100)).collect();
            row.sort_unstable();
            row
        })
        .collect();
    let video = Video::new(1.0, rows).unwrap();
    let len = rng.random_range(1..=10);
    let mut samples: Vec<f64> = (0..len)
        .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..150.0f64).round() })
        .collect();
    if samples.iter().all(|g| *g == 0.0) {
        samples[0] = 50.0;
    }
    let trace = ThroughputTrace::new(samples).unwrap();
    let cfg = SessionConfig {
        startup_delay_s: rng.random_range(0..=4) as f64,
        rebuffer_target_s: 10.0,
        trace_start_s: rng.random_range(0..len as u32),
        epsilon: [0.0, 0.5, 1.0][rng.random_range(0..3)],
    };
    (video, trace, cfg)
}
