use super::{check_action, EnvConfig, EnvId, EnvSpec, Environment, StateVec, StepResult};
use crate::error::{Error, Result};

/// Run forward along a corridor bounded by walls at `|y| = 1`.
///
/// State: `[y, vx, vy, 1 - |y|, vx - v_limit]`. Reward is forward progress
/// `dt * vx'`; cost is raised whenever `vx'` exceeds the velocity limit and
/// leaving the corridor ends the episode as a failure.
#[derive(Debug, Clone)]
pub struct CorridorRun {
    config: EnvConfig,
    y: f64,
    vx: f64,
    vy: f64,
    steps: usize,
    done: bool,
}

impl CorridorRun {
    pub const STATE_DIM: usize = 5;
    pub const ACTION_DIM: usize = 2;

    pub fn new(config: EnvConfig) -> Self {
        debug_assert_eq!(config.env_id, EnvId::CorridorRun);
        Self {
            config,
            y: 0.0,
            vx: 0.0,
            vy: 0.0,
            steps: 0,
            done: true,
        }
    }

    fn observe(&self) -> StateVec {
        let limit = self.config.physics.velocity_limit;
        StateVec(vec![
            self.y,
            self.vx,
            self.vy,
            1.0 - self.y.abs(),
            self.vx - limit,
        ])
    }
}

impl Environment for CorridorRun {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            env_id: EnvId::CorridorRun,
            state_dim: Self::STATE_DIM,
            action_dim: Self::ACTION_DIM,
            threshold: self.config.physics.velocity_limit,
            role: self.config.role,
            max_steps: self.config.max_steps(),
        }
    }

    fn reset(&mut self, _episode_seed: u64) -> StateVec {
        self.y = 0.0;
        self.vx = 0.0;
        self.vy = 0.0;
        self.steps = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        let [ax, ay] = check_action(action, Self::ACTION_DIM)?;
        let p = self.config.physics;
        self.vx = p.velocity(self.vx, ax);
        self.vy = p.velocity(self.vy, ay);
        self.y += p.dt * self.vy;
        self.steps += 1;

        let reward = p.dt * self.vx;
        let cost = u8::from(self.vx > p.velocity_limit);
        let failure = self.y.abs() > 1.0;
        let truncated = !failure && self.steps >= self.config.max_steps();
        self.done = failure || truncated;
        Ok(StepResult {
            next_state: self.observe(),
            reward,
            reward_used: reward,
            cost,
            terminated: failure,
            failure,
            truncated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::Role;

    fn env() -> CorridorRun {
        CorridorRun::new(EnvConfig::new(EnvId::CorridorRun, Role::Target, 0))
    }

    #[test]
    fn reset_starts_at_rest_on_centerline() {
        let mut e = env();
        let s = e.reset(42);
        assert_eq!(&s[..3], &[0.0, 0.0, 0.0]);
        assert_eq!(s[3], 1.0);
        assert_eq!(s[4], -1.0);
    }

    #[test]
    fn zero_action_at_rest() {
        let mut e = env();
        e.reset(0);
        let r = e.step(&[0.0, 0.0]).unwrap();
        assert_eq!((r.next_state[1], r.next_state[2]), (0.0, 0.0));
        assert_eq!(r.reward, 0.0);
        assert_eq!(r.cost, 0);
        assert!(!r.terminated && !r.truncated);
    }

    #[test]
    fn speeding_costs() {
        let mut e = env();
        e.reset(0);
        e.vx = 1.4;
        // 0.9 * 1.4 + 0.5 * (-0.12) = 1.2
        let r = e.step(&[-0.12, 0.0]).unwrap();
        assert!((r.next_state[1] - 1.2).abs() < 1e-12);
        assert_eq!(r.cost, 1);
        assert!((r.reward - 0.12).abs() < 1e-12);
    }

    #[test]
    fn leaving_corridor_is_failure() {
        let mut e = env();
        e.reset(0);
        let mut last = None;
        for _ in 0..100 {
            let r = e.step(&[0.0, 1.0]).unwrap();
            let done = r.terminated;
            last = Some(r);
            if done {
                break;
            }
        }
        let r = last.unwrap();
        assert!(r.failure && r.terminated);
        assert!(r.next_state[0].abs() > 1.0);
        assert!(matches!(e.step(&[0.0, 0.0]), Err(Error::EpisodeFinished)));
    }

    #[test]
    fn truncates_at_max_steps() {
        let mut cfg = EnvConfig::new(EnvId::CorridorRun, Role::Source, 0);
        cfg.max_steps = Some(5);
        let mut e = CorridorRun::new(cfg);
        e.reset(0);
        for i in 0..5 {
            let r = e.step(&[0.1, 0.0]).unwrap();
            assert_eq!(r.truncated, i == 4);
            assert!(!r.terminated);
        }
    }

    #[test]
    fn out_of_range_actions_are_clamped() {
        let mut a = env();
        let mut b = env();
        a.reset(0);
        b.reset(0);
        assert_eq!(a.step(&[5.0, -9.0]).unwrap(), b.step(&[1.0, -1.0]).unwrap());
        assert!(matches!(a.step(&[1.0]), Err(Error::ActionDim { .. })));
    }
}
