mod common;

use std::time::Instant;

use common::random_instance;
use hasopt_core::optimizer::quadratic_switch_objective;
use hasopt_core::{
    brute_force, check_feasibility, generate_trace, generate_video, solve, solve_step1, solve_step2,
    AdaptationPath, Error, SessionConfig, ThroughputTrace, TraceSpec, Video, VideoSpec,
};
use proptest::prelude::*;

#[test]
fn solve_matches_exhaustive_search() {
    let mut feasible = 0;
    for seed in 0..1000 {
        let (video, trace, cfg) = random_instance(seed, 8, 3);
        match (solve(&video, &trace, &cfg), brute_force(&video, &trace, &cfg)) {
            (Ok(fast), Ok(slow)) => {
                assert_eq!(fast, slow, "seed {seed}");
                feasible += 1;
            }
            (Err(Error::Infeasible { segment: a, .. }), Err(Error::Infeasible { segment: b, .. })) => {
                assert_eq!(a, b, "seed {seed}");
            }
            (a, b) => panic!("seed {seed}: solve {a:?} vs brute force {b:?}"),
        }
    }
    assert!(feasible > 300, "only {feasible} feasible instances");
}

#[test]
fn step_by_step_equals_composition() {
    for seed in 0..200 {
        let (video, trace, cfg) = random_instance(seed, 7, 3);
        let Ok(w_opt) = solve_step1(&video, &trace, &cfg) else {
            continue;
        };
        let two_step = solve_step2(&video, &trace, &cfg, w_opt).unwrap();
        assert_eq!(two_step, solve(&video, &trace, &cfg).unwrap());
        assert_eq!(two_step.w_opt, w_opt);
    }
}

#[test]
fn returned_paths_honour_constraints() {
    for seed in 0..300 {
        let (video, trace, cfg) = random_instance(seed, 8, 3);
        let Ok(res) = solve(&video, &trace, &cfg) else {
            continue;
        };
        assert!(check_feasibility(&res.path, &video, &trace, &cfg).unwrap().is_feasible());
        assert!(res.step2_mean_quality >= res.w_opt - cfg.epsilon - 1e-9);
        assert_eq!(res.switches, res.path.switches());
    }
}

#[test]
fn largest_epsilon_gives_best_constant_path() {
    for seed in 0..300 {
        let (video, trace, cfg) = random_instance(seed, 8, 3);
        let cfg = cfg.with_epsilon(video.r() as f64);
        let Ok(res) = solve(&video, &trace, &cfg) else {
            continue;
        };
        let best_constant = (1..=video.r())
            .rev()
            .find(|&j| {
                let path = AdaptationPath::new(vec![j; video.n()], &video).unwrap();
                check_feasibility(&path, &video, &trace, &cfg).unwrap().is_feasible()
            })
            .expect("level 1 is feasible");
        assert_eq!(res.switches, 0, "seed {seed}");
        assert_eq!(res.path.levels(), vec![best_constant; video.n()].as_slice(), "seed {seed}");
        assert_eq!(res, brute_force(&video, &trace, &cfg).unwrap());
    }
}

#[test]
fn epsilon_never_increases_switches() {
    for seed in 0..300 {
        let (video, trace, cfg) = random_instance(seed, 8, 3);
        let mut last = usize::MAX;
        for eps in [0.0, 0.25, 0.5, 1.0, 2.0] {
            let Ok(res) = solve(&video, &trace, &cfg.with_epsilon(eps)) else {
                break;
            };
            assert!(res.switches <= last, "seed {seed} eps {eps}");
            last = res.switches;
        }
    }
}

#[test]
fn more_goodput_never_lowers_w_opt() {
    for seed in 0..300 {
        let (video, trace, cfg) = random_instance(seed, 8, 3);
        let Ok(base) = solve_step1(&video, &trace, &cfg) else {
            continue;
        };
        let boosted =
            ThroughputTrace::new(trace.samples().iter().map(|g| g * 1.5 + 3.0).collect()).unwrap();
        assert!(solve_step1(&video, &boosted, &cfg).unwrap() >= base, "seed {seed}");
    }
}

#[test]
fn full_scale_instance_solves_quickly() {
    let video = generate_video(&VideoSpec::reference(200, 7)).unwrap();
    let trace = generate_trace(&TraceSpec::mobile(7)).unwrap();
    for start in [0, 350, 700] {
        let cfg = SessionConfig::default().with_start(start);
        let t = Instant::now();
        let res = solve(&video, &trace, &cfg).unwrap();
        let elapsed = t.elapsed();
        assert!(elapsed.as_secs_f64() < 60.0, "{elapsed:?}");
        // exact integer checks
        let q_max = (res.w_opt * 200.0).round() as u64;
        assert!(res.path.quality_sum() as f64 >= q_max as f64 - cfg.epsilon * 200.0);
        let prefix = res.path.prefix_bytes(&video);
        let shifted = trace.shifted(start);
        for (k, bytes) in prefix.iter().enumerate() {
            let d = hasopt_core::deadline(k + 1, &cfg, &video).unwrap();
            assert!(*bytes <= shifted.capacity(d));
        }
        eprintln!("start {start}: {elapsed:?}, w_opt {}, switches {}", res.w_opt, res.switches);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn quadratic_objective_is_switch_count(levels in prop::collection::vec(1usize..=5, 1..40)) {
        let video = Video::new(1.0, vec![vec![1, 2, 3, 4, 5]; levels.len()]).unwrap();
        let path = AdaptationPath::new(levels.clone(), &video).unwrap();
        prop_assert_eq!(quadratic_switch_objective(&levels, 5), path.switches() as f64);
    }
}
