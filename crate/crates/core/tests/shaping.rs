use std::sync::Arc;

use anoseqs::detector::{AnomalyScorer, DetectorConfig, DetectorModel, ScoreMode, StreamingScorer};
use anoseqs::envs::{EnvConfig, EnvId, Environment, Role};
use anoseqs::shaping::{shape_reward, CostPenaltyEnv, ShapedEnv, ShapingConfig};
use anoseqs::Result;
use proptest::prelude::*;

struct Constant(f64);

impl AnomalyScorer for Constant {
    fn state_dim(&self) -> usize {
        8
    }
    fn feed(&mut self, _: &[f64]) -> Result<Option<f64>> {
        Ok(Some(self.0))
    }
    fn reset(&mut self) {}
}

fn actions(n: usize, phase: f64) -> Vec<[f64; 2]> {
    (0..n)
        .map(|i| {
            let x = i as f64 * 0.37 + phase;
            [x.sin(), (1.3 * x).cos()]
        })
        .collect()
}

#[test]
fn zero_beta_leaves_rewards_alone() {
    let model = Arc::new(DetectorModel::new(4, 8, &DetectorConfig::default()).unwrap());
    let env = EnvConfig::new(EnvId::HazardPointGoal, Role::Target, 2).build().unwrap();
    let cfg = ShapingConfig {
        theta: -1.0,
        beta: 0.0,
        score_mode: ScoreMode::Mae,
    };
    let mut shaped = ShapedEnv::new(env, StreamingScorer::new(model, ScoreMode::Mae), cfg).unwrap();
    shaped.reset(3);
    for a in actions(40, 0.0) {
        let r = shaped.step(&a).unwrap();
        assert_eq!(r.reward_used, r.reward);
    }
}

#[test]
fn warm_up_steps_are_unpenalized() {
    let model = Arc::new(DetectorModel::new(5, 8, &DetectorConfig::default()).unwrap());
    let env = EnvConfig::new(EnvId::HazardPointGoal, Role::Target, 2).build().unwrap();
    let cfg = ShapingConfig {
        theta: 0.0,
        beta: 1000.0,
        score_mode: ScoreMode::Mae,
    };
    let mut shaped = ShapedEnv::new(env, StreamingScorer::new(model, ScoreMode::Mae), cfg).unwrap();
    for episode in 0..2 {
        shaped.reset(episode);
        for (i, a) in actions(6, 1.0).into_iter().enumerate() {
            let r = shaped.step(&a).unwrap();
            if i < 4 {
                assert_eq!(r.reward_used, r.reward);
                assert_eq!(shaped.last_eta(), 0.0);
            } else {
                assert!(r.reward_used < r.reward);
            }
        }
    }
}

#[test]
fn cost_penalty_baseline() {
    let env = EnvConfig::new(EnvId::CorridorRun, Role::Target, 0).build().unwrap();
    let mut e = CostPenaltyEnv::new(env, 5.0).unwrap();
    e.reset(0);
    let mut saw_cost = false;
    for _ in 0..30 {
        let r = e.step(&[1.0, 0.0]).unwrap();
        assert_eq!(r.reward_used, r.reward - 5.0 * f64::from(r.cost));
        saw_cost |= r.cost == 1;
    }
    assert!(saw_cost);
}

proptest! {
    #[test]
    fn shaped_never_exceeds_original(r in -10.0..10.0f64, eta in 0.0..1.0f64, theta in -1.0..1.0f64, beta in 0.0..500.0f64) {
        prop_assert!(shape_reward(r, eta, theta, beta) <= r);
    }

    #[test]
    fn penalty_strictly_monotone(r in -10.0..10.0f64, theta in 0.0..0.1f64, gap in 1e-3..1.0f64,
                                 beta in 0.1..100.0f64, d in 0.01..10.0f64) {
        let eta = theta + gap;
        prop_assert!(shape_reward(r, eta, theta, beta + d) < shape_reward(r, eta, theta, beta));
        prop_assert!(shape_reward(r, eta + d * 0.01, theta, beta) < shape_reward(r, eta, theta, beta));
    }

    #[test]
    fn wrapper_only_touches_reward_used(seed in 0u64..1000, eta in 0.0..0.1f64, beta in 0.0..200.0f64) {
        let mut plain = EnvConfig::new(EnvId::HazardPointGoal, Role::Target, seed).build().unwrap();
        let inner = EnvConfig::new(EnvId::HazardPointGoal, Role::Target, seed).build().unwrap();
        let cfg = ShapingConfig { theta: 0.01, beta, score_mode: ScoreMode::Mae };
        let mut shaped = ShapedEnv::new(inner, Constant(eta), cfg).unwrap();
        prop_assert_eq!(plain.reset(seed), shaped.reset(seed));
        for a in actions(60, seed as f64) {
            let p = plain.step(&a).unwrap();
            let s = shaped.step(&a).unwrap();
            prop_assert_eq!(&p.next_state, &s.next_state);
            prop_assert_eq!((p.reward, p.cost, p.terminated, p.failure, p.truncated),
                            (s.reward, s.cost, s.terminated, s.failure, s.truncated));
            prop_assert_eq!(s.reward_used, shape_reward(p.reward, eta, 0.01, beta));
            if p.done() { break; }
        }
    }
}
