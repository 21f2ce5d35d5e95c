use hasopt_core::{cumulative_volume, deadline, inverse_time, SessionConfig, ThroughputTrace, Video};
use proptest::prelude::*;

fn trace_strategy(positive: bool) -> impl Strategy<Value = ThroughputTrace> {
    let lo = if positive { 1.0 } else { 0.0 };
    prop::collection::vec(prop_oneof![Just(lo), lo..1000.0f64], 1..20).prop_filter_map(
        "needs a positive sample",
        |s| ThroughputTrace::new(s).ok(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn volume_is_monotone(trace in trace_strategy(false), start in 0u32..20, a in 0.0..100.0f64, b in 0.0..100.0f64) {
        let start = start % trace.duration_s();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(cumulative_volume(&trace, start, lo) <= cumulative_volume(&trace, start, hi));
        prop_assert_eq!(cumulative_volume(&trace, start, 0.0), 0.0);
    }

    #[test]
    fn volume_is_additive_across_wrap(trace in trace_strategy(false), start in 0u32..20, whole in 0u32..60, t2 in 0.0..50.0f64) {
        let len = trace.duration_s();
        let start = start % len;
        // split at an integer time so the second leg starts on a sample boundary
        let t1 = f64::from(whole);
        let shifted_start = (start + whole) % len;
        let total = cumulative_volume(&trace, start, t1 + t2);
        let parts = cumulative_volume(&trace, start, t1) + cumulative_volume(&trace, shifted_start, t2);
        prop_assert!((total - parts).abs() <= 1e-9 * total.max(1.0), "{} vs {}", total, parts);
    }

    #[test]
    fn inverse_undoes_volume_where_goodput_positive(trace in trace_strategy(true), start in 0u32..20, t in 0.0..100.0f64) {
        let start = start % trace.duration_s();
        let v = cumulative_volume(&trace, start, t);
        let back = inverse_time(&trace, start, v).unwrap();
        prop_assert!((back - t).abs() <= 1e-9 * t.max(1.0), "{} vs {}", back, t);
    }

    #[test]
    fn inverse_is_smallest_time(trace in trace_strategy(false), start in 0u32..20, v in 0.0..5000.0f64) {
        let start = start % trace.duration_s();
        let t = inverse_time(&trace, start, v).unwrap();
        let tol = 1e-9 * v.max(1.0);
        prop_assert!(cumulative_volume(&trace, start, t) >= v - tol);
        if t > 1e-6 {
            prop_assert!(cumulative_volume(&trace, start, t - 1e-6) < v + tol);
        }
    }

    #[test]
    fn deadlines_step_by_tau(n in 1usize..50, tau in 0.1..4.0f64, t0 in 0.0..10.0f64) {
        let video = Video::new(tau, vec![vec![1]; n]).unwrap();
        let cfg = SessionConfig { startup_delay_s: t0, ..SessionConfig::default() };
        for i in 1..n {
            let step = deadline(i + 1, &cfg, &video).unwrap() - deadline(i, &cfg, &video).unwrap();
            prop_assert!((step - tau).abs() < 1e-9);
        }
    }
}
