use hasopt_core::workload::sample_stats;
use hasopt_core::{generate_trace, generate_video, mbps_to_bytes_per_sec, TraceSpec, VideoSpec};

#[test]
fn mobile_traces_meet_statistics_for_100_seeds() {
    let target = mbps_to_bytes_per_sec(0.67);
    let mut worst_ac1 = 0.0f64;
    for seed in 0..100 {
        let spec = TraceSpec::mobile(seed);
        let trace = generate_trace(&spec).unwrap();
        assert_eq!(trace.samples().len(), 720);
        assert!(trace.samples().iter().all(|g| *g >= 0.0));
        let (mean, cv, ac1) = sample_stats(trace.samples());
        assert!((mean / target - 1.0).abs() <= 0.02, "seed {seed}: mean {mean}");
        assert!((cv / 0.38 - 1.0).abs() <= 0.10, "seed {seed}: cv {cv}");
        worst_ac1 = worst_ac1.max((ac1 - 0.80).abs());
    }
    assert!(worst_ac1 <= 0.05, "worst ac1 deviation {worst_ac1}");
}

#[test]
fn reference_videos_match_level_rates() {
    for seed in 0..20 {
        let spec = VideoSpec::reference(300, seed);
        let video = generate_video(&spec).unwrap();
        for (j, want) in spec.level_rates.iter().enumerate() {
            let got = video.mean_level_rate(j + 1);
            assert!((got / want - 1.0).abs() <= 0.05, "seed {seed} level {}: {got}", j + 1);
        }
        assert!(video.rows().all(|row| row.windows(2).all(|w| w[0] <= w[1])));
    }
}

#[test]
fn short_traces_still_generate() {
    let spec = TraceSpec { duration_s: 5, ..TraceSpec::mobile(4) };
    let trace = generate_trace(&spec).unwrap();
    assert_eq!(trace, generate_trace(&spec).unwrap());
    assert_eq!(trace.samples().len(), 5);
}
