use anoseqs::agent::TrajectoryRecord;
use anoseqs::envs::{EnvId, StateVec};
use anoseqs::sequences::{
    build_dataset, extract_windows, filter_safe, split_episodes, WindowDataset, WindowParams,
};
use proptest::prelude::*;

fn record(episode: u64, step: u64, value: f64, cost: u8) -> TrajectoryRecord {
    TrajectoryRecord {
        step,
        episode,
        state: vec![value - 1.0, 0.0],
        action: vec![0.0, 0.0],
        reward_orig: 0.0,
        reward_used: 0.0,
        cost,
        terminated: false,
        failure: false,
        truncated: false,
        next_state: vec![value, value * 0.5],
    }
}

/// Episodes given as lists of per-step cost flags.
fn log_from(episodes: &[Vec<u8>]) -> Vec<TrajectoryRecord> {
    let mut out = Vec::new();
    let mut step = 0;
    for (e, costs) in episodes.iter().enumerate() {
        for (i, &c) in costs.iter().enumerate() {
            step += 1;
            out.push(record(e as u64, step, (e * 1000 + i) as f64 * 0.25, c));
        }
    }
    out
}

fn params(t: usize, stride: usize, h: usize, holdout: f64) -> WindowParams {
    WindowParams {
        window_len: t,
        stride,
        horizon: h,
        holdout_fraction: holdout,
    }
}

#[test]
fn all_safe_single_episode_count() {
    let log = log_from(&[vec![0; 40]]);
    for (t, stride) in [(3, 1), (5, 2), (16, 1), (7, 4)] {
        let ds = build_dataset(&log, EnvId::CorridorRun, &params(t, stride, t, 0.0), "run", 1).unwrap();
        assert_eq!(ds.len(), (40 - t) / stride + 1);
        assert!(ds.holdout.is_empty());
    }
}

#[test]
fn zero_safe_windows_rejected() {
    let log = log_from(&[vec![1; 10]]);
    let err = build_dataset(&log, EnvId::CorridorRun, &params(3, 1, 0, 0.2), "run", 0).unwrap_err();
    assert!(err.to_string().contains("longer source run"));
}

#[test]
fn holdout_fraction_is_floored() {
    let log = log_from(&[vec![0; 30]]);
    let ds = build_dataset(&log, EnvId::CorridorRun, &params(3, 1, 3, 0.25), "run", 0).unwrap();
    assert_eq!(ds.len(), 28);
    assert_eq!(ds.holdout.len(), 7);
}

#[test]
fn dataset_file_round_trip() {
    let log = log_from(&[vec![0; 25], vec![0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]]);
    let ds = build_dataset(&log, EnvId::HazardPointGoal, &params(4, 1, 2, 0.3), "src-7", 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("windows.bin");
    ds.save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let header = format!("T=4 M=2 count={} env=hazard_point_goal\n", ds.len());
    assert!(bytes.starts_with(header.as_bytes()));
    assert_eq!(bytes.len(), header.len() + ds.len() * 4 * 2 * 4);
    let back = WindowDataset::load(&path).unwrap();
    assert_eq!(back, ds);
    assert_eq!(back.to_bytes(), bytes);
}

fn oracle_kept(len: usize, t: usize, stride: usize, events: &[usize], h: usize) -> Vec<usize> {
    let mut kept = Vec::new();
    let mut start = 0;
    while start + t <= len {
        if events.iter().all(|&e| e < start || e > start + t - 1 + h) {
            kept.push(start);
        }
        start += stride;
    }
    kept
}

proptest! {
    #[test]
    fn kept_windows_have_clean_extended_range(
        costs in prop::collection::vec(prop::bool::weighted(0.08), 0..80),
        t in 2usize..8,
        stride in 1usize..4,
        h in 0usize..10,
    ) {
        let episode: Vec<StateVec> = (0..costs.len()).map(|i| StateVec(vec![i as f64])).collect();
        let events: Vec<usize> = costs.iter().enumerate().filter(|(_, &c)| c).map(|(i, _)| i).collect();
        let kept = filter_safe(extract_windows(&episode, t, stride, 0), &events, h);
        let starts: Vec<usize> = kept.iter().map(|w| w.start).collect();
        prop_assert_eq!(starts, oracle_kept(costs.len(), t, stride, &events, h));
        for w in &kept {
            prop_assert_eq!(w.states.rows(), t);
            for j in w.start..=(w.start + t - 1 + h).min(costs.len().saturating_sub(1)) {
                prop_assert!(!costs[j]);
            }
        }
    }

    #[test]
    fn dataset_counts_match_oracle_and_never_span_episodes(
        episodes in prop::collection::vec(
            prop::collection::vec(prop::bool::weighted(0.05), 0..40), 1..5),
        seed in any::<u64>(),
    ) {
        let eps: Vec<Vec<u8>> = episodes.iter().map(|e| e.iter().map(|&c| u8::from(c)).collect()).collect();
        let log = log_from(&eps);
        prop_assume!(!log.is_empty());
        let p = params(4, 1, 4, 0.2);
        let expected: usize = eps.iter().map(|e| {
            let events: Vec<usize> = e.iter().enumerate().filter(|(_, &c)| c == 1).map(|(i, _)| i).collect();
            oracle_kept(e.len(), 4, 1, &events, 4).len()
        }).sum();
        match build_dataset(&log, EnvId::CorridorRun, &p, "p", seed) {
            Ok(ds) => {
                prop_assert_eq!(ds.train.len() + ds.holdout.len(), expected);
                prop_assert_eq!(ds.holdout.len(), (0.2 * expected as f64).floor() as usize);
                let by_episode = split_episodes(&log);
                for w in ds.train.iter().chain(&ds.holdout) {
                    let states = &by_episode[&w.episode].0;
                    prop_assert!(w.start + 4 <= states.len());
                    for r in 0..4 {
                        prop_assert_eq!(w.states.row(r), &states[w.start + r][..]);
                    }
                }
            }
            Err(_) => prop_assert_eq!(expected, 0),
        }
    }
}
