use hasopt_core::features::ScalingContext;
use hasopt_core::{
    build_corpus, extract, generate_trace, generate_video, solve, Corpus, PlayerStateView,
    SessionConfig, ThroughputTrace, TraceSpec, Video, VideoSpec,
};
use proptest::prelude::*;

fn workload(n: usize) -> (Video, ThroughputTrace) {
    let video = generate_video(&VideoSpec::reference(n, 4)).unwrap();
    // whole bytes per second keep V(t) integral at integer times
    let raw = generate_trace(&TraceSpec::mobile(2)).unwrap();
    let trace = ThroughputTrace::new(raw.samples().iter().map(|g| g.round()).collect()).unwrap();
    (video, trace)
}

#[test]
fn single_pair_labels_reconstruct_the_optimal_path() {
    let (video, trace) = workload(80);
    let cfg = SessionConfig::default().with_start(120);
    let corpus = build_corpus(std::slice::from_ref(&video), &trace, &[120], &cfg, None).unwrap();
    assert_eq!(corpus.samples.len(), 80);
    assert_eq!(corpus.ctx.feature_len(5), 242);
    let labels: Vec<usize> = corpus.samples.iter().map(|s| s.label + 1).collect();
    let opt = solve(&video, &trace, &cfg).unwrap();
    assert_eq!(labels, opt.path.levels());
    assert!(corpus.samples.iter().all(|s| s.features.iter().all(|x| (0.0..=1.0).contains(x))));
}

#[test]
fn corpus_order_and_csv_round_trip() {
    let (video, trace) = workload(30);
    let other = generate_video(&VideoSpec::reference(30, 5)).unwrap();
    let videos = [video.clone(), other];
    let starts = [0, 50, 400];
    let cfg = SessionConfig::default();
    let corpus = build_corpus(&videos, &trace, &starts, &cfg, None).unwrap();
    assert_eq!(corpus.samples.len(), 2 * 3 * 30);
    // block 2 (video 0, start 400) matches a corpus built for that pair alone
    let single = build_corpus(&videos[..1], &trace, &[400], &cfg, Some(corpus.ctx)).unwrap();
    assert_eq!(corpus.samples[60..90], single.samples[..]);

    let mut buf = Vec::new();
    corpus.write_csv(&mut buf).unwrap();
    assert_eq!(Corpus::levels_in_header(&buf[..]).unwrap(), 5);
    let back = Corpus::read_csv(&buf[..], corpus.ctx, 5).unwrap();
    assert_eq!(back.samples.len(), corpus.samples.len());
    for (a, b) in back.samples.iter().zip(&corpus.samples) {
        assert_eq!(a, b);
    }
    assert!(Corpus::read_csv(&buf[..], corpus.ctx, 4).is_err());
}

#[test]
fn features_are_scale_free() {
    let (video, trace) = workload(40);
    let doubled_video = Video::new(
        video.segment_duration_s(),
        video.rows().map(|row| row.iter().map(|s| 2 * s).collect()).collect(),
    )
    .unwrap();
    let doubled_trace = ThroughputTrace::new(trace.samples().iter().map(|g| 2.0 * g).collect()).unwrap();
    let cfg = SessionConfig::default();
    let starts = [0, 333];
    let a = build_corpus(std::slice::from_ref(&video), &trace, &starts, &cfg, None).unwrap();
    let b = build_corpus(std::slice::from_ref(&doubled_video), &doubled_trace, &starts, &cfg, None).unwrap();
    assert_eq!(b.ctx.nu, 2.0 * a.ctx.nu);
    assert_eq!(a.samples, b.samples);
}

#[test]
fn mismatched_level_counts_are_rejected() {
    let (video, trace) = workload(10);
    let three = Video::new(1.0, vec![vec![1, 2, 3]; 10]).unwrap();
    assert!(build_corpus(&[video, three], &trace, &[0], &SessionConfig::default(), None).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn length_and_range_for_any_horizon(
        c_m in 1usize..8, c_ot in 1usize..8, r in 1usize..5, n in 1usize..12,
        done in 0usize..12, buffer in 0.0..50.0f64, tp in 0.0..500.0f64,
    ) {
        let done = done % n;
        let video = Video::new(1.0, (0..n).map(|i| (1..=r).map(|j| (10 * j + i) as u64).collect()).collect()).unwrap();
        let ctx = ScalingContext { nu: 100.0, bl_max: 20.0, c_m, c_ot };
        let levels = vec![r; done];
        let sizes: Vec<u64> = (1..=done).map(|i| video.size(i, r)).collect();
        let tps = vec![tp; done];
        let view = PlayerStateView {
            segment_index: done + 1,
            buffer_level_s: buffer,
            now_s: 0.0,
            downloaded_levels: &levels,
            downloaded_sizes: &sizes,
            observed_throughputs: &tps,
            video: &video,
        };
        let f = extract(&view, &video, &ctx);
        prop_assert_eq!(f.len(), 1 + c_ot + 2 * c_m + c_m * r + 1);
        prop_assert!(f.iter().all(|x| (0.0..=1.0).contains(x)));
        // the last future slot of the first upcoming segment is its top level
        prop_assert_eq!(f[1 + c_ot + 2 * c_m + r - 1], (video.size(done + 1, r) as f64 / 100.0).min(1.0));
        prop_assert_eq!(*f.last().unwrap(), (buffer / 20.0).min(1.0));
        // zero-padded average
        let expected = (tp * done.min(c_ot) as f64 / c_ot as f64 / 100.0).min(1.0);
        prop_assert!((f[0] - expected).abs() < 1e-12);
    }
}
