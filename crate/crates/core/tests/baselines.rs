use hasopt_core::baselines::{aggressive_logic, rate_based_logic, RateBasedConfig};
use hasopt_core::{simulate, SessionConfig, ThroughputTrace, Video};

fn video(n: usize) -> Video {
    // level rates 100, 300, 600, 1000 B/s
    Video::new(1.0, vec![vec![100, 300, 600, 1000]; n]).unwrap()
}

#[test]
fn rate_based_climbs_to_the_top_on_a_generous_link() {
    let v = video(120);
    let trace = ThroughputTrace::new(vec![20_000.0; 60]).unwrap();
    let logic = rate_based_logic(RateBasedConfig::default(), &v).unwrap();
    let log = simulate(&v, &trace, &SessionConfig::default(), &logic).unwrap();
    let levels: Vec<usize> = log.levels().collect();
    assert!(levels.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1), "{levels:?}");
    assert_eq!(*levels.last().unwrap(), 4);
    assert!(log.stall_events.is_empty());
}

#[test]
fn aggressive_follows_an_alternating_link() {
    // 10 s at 2000 B/s, 10 s at 150 B/s, repeating
    let samples: Vec<f64> = (0..200).map(|t| if (t / 10) % 2 == 0 { 2000.0 } else { 150.0 }).collect();
    let trace = ThroughputTrace::new(samples).unwrap();
    let v = video(200);
    let log = simulate(&v, &trace, &SessionConfig::default(), &aggressive_logic(&v)).unwrap();
    let levels: Vec<usize> = log.levels().collect();
    let switches = levels.windows(2).filter(|w| w[0] != w[1]).count();
    assert!(switches >= 10, "{switches} switches: {levels:?}");
    assert!(levels.contains(&4) && levels.contains(&1));
    // every choice fits the previous observation
    for (k, d) in log.decisions.iter().enumerate().skip(1) {
        let tp = log.decisions[k - 1].observed_throughput;
        let fits = |j: usize| v.size(k + 1, j) as f64 <= tp;
        assert!(d.level == 1 || fits(d.level));
        assert!(d.level == 4 || !fits(d.level + 1));
    }
}
