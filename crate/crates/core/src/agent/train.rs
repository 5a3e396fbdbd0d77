use rand::Rng;
use serde::{Deserialize, Serialize};

use super::buffer::{ReplayBuffer, Transition};
use super::log::TrajectoryRecord;
use super::td3::{greedy_action, select_action, AgentConfig, Td3Agent};
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::metrics::{episodic_cost_rate, total_cost_rate, EpisodeRecord, MetricsRow};
use crate::seeding;

const TAG_TRAIN_RNG: u64 = 0x7a1;
const TAG_AGENT_INIT: u64 = 0xa9e;
const TAG_EPISODES: u64 = 0xe915;
const TAG_EVAL: u64 = 0xe7a1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub total_steps: u64,
    /// Evaluate every this many environment steps; 0 disables evaluation.
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_steps: 30_000,
            eval_interval: 1000,
            eval_episodes: 5,
            seed: 0,
        }
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub agent: Td3Agent,
    /// One row per evaluation point.
    pub metrics: Vec<MetricsRow>,
    /// Completed training episodes, scored on the original reward.
    pub episodes: Vec<EpisodeRecord>,
    pub total_cost: u64,
    pub steps: u64,
    pub updates: u64,
}

impl TrainOutcome {
    pub fn total_cost_rate(&self) -> f64 {
        total_cost_rate(self.total_cost, self.steps.max(1))
    }
}

pub fn training_episode_seed(run_seed: u64, episode: u64) -> u64 {
    seeding::derive(seeding::derive(run_seed, TAG_EPISODES), episode)
}

pub fn evaluation_episode_seed(run_seed: u64, index: usize) -> u64 {
    seeding::derive(seeding::derive(run_seed, TAG_EVAL), index as u64)
}

/// Runs one episode with the noise-free policy, scoring the environment's
/// own reward (never a shaped one).
pub fn run_episode<E: Environment + ?Sized>(
    actor: &netcore::Network,
    env: &mut E,
    episode_seed: u64,
) -> Result<EpisodeRecord> {
    let mut state = env.reset(episode_seed);
    let mut rec = EpisodeRecord {
        return_orig: 0.0,
        cost_count: 0,
        length: 0,
        success: false,
        failure: false,
    };
    loop {
        let action = greedy_action(actor, &state)?;
        let r = env.step(&action)?;
        rec.return_orig += r.reward;
        rec.cost_count += r.cost as usize;
        rec.length += 1;
        if r.done() {
            rec.success = r.terminated && !r.failure;
            rec.failure = r.failure;
            return Ok(rec);
        }
        state = r.next_state;
    }
}

pub fn evaluate<E: Environment + ?Sized>(
    actor: &netcore::Network,
    env: &mut E,
    run_seed: u64,
    episodes: usize,
) -> Result<Vec<EpisodeRecord>> {
    (0..episodes)
        .map(|k| run_episode(actor, env, evaluation_episode_seed(run_seed, k)))
        .collect()
}

/// Standard off-policy loop: uniform random actions for the warm-up steps,
/// then the noisy behavior policy with one TD3 update per environment step.
/// Every transition goes to `sink`; every `eval_interval` steps the policy is
/// evaluated on `eval_env` and a metrics row is appended.
pub fn train<E, V>(
    env: &mut E,
    eval_env: &mut V,
    agent_config: &AgentConfig,
    config: &TrainConfig,
    sink: &mut dyn FnMut(&TrajectoryRecord) -> Result<()>,
) -> Result<TrainOutcome>
where
    E: Environment + ?Sized,
    V: Environment + ?Sized,
{
    if config.total_steps < agent_config.warmup_steps {
        return Err(Error::Config(format!(
            "total_steps {} is below warmup_steps {}",
            config.total_steps, agent_config.warmup_steps
        )));
    }
    let spec = env.spec();
    let mut agent = Td3Agent::new(
        spec.state_dim,
        spec.action_dim,
        agent_config.clone(),
        seeding::derive(config.seed, TAG_AGENT_INIT),
    )?;
    let mut rng = seeding::rng(config.seed, TAG_TRAIN_RNG);
    let mut buffer = ReplayBuffer::new(agent_config.buffer_capacity);

    let mut metrics = Vec::new();
    let mut episodes = Vec::new();
    let mut total_cost = 0u64;
    let mut updates = 0u64;
    let mut episode = 0u64;
    let mut state = env.reset(training_episode_seed(config.seed, episode));
    let mut current = EpisodeRecord {
        return_orig: 0.0,
        cost_count: 0,
        length: 0,
        success: false,
        failure: false,
    };

    for step in 1..=config.total_steps {
        let action: Vec<f64> = if step <= agent_config.warmup_steps {
            (0..spec.action_dim)
                .map(|_| rng.random_range(-1.0..=1.0))
                .collect()
        } else {
            select_action(
                &agent.actor,
                &state,
                agent_config.exploration_noise_sigma,
                &mut rng,
            )?
        };
        let r = env.step(&action)?;
        if !r.next_state.is_finite() {
            return Err(Error::Diverged(format!("non-finite state at step {step}")));
        }
        total_cost += r.cost as u64;
        current.return_orig += r.reward;
        current.cost_count += r.cost as usize;
        current.length += 1;

        sink(&TrajectoryRecord {
            step,
            episode,
            state: state.0.clone(),
            action: action.clone(),
            reward_orig: r.reward,
            reward_used: r.reward_used,
            cost: r.cost,
            terminated: r.terminated,
            failure: r.failure,
            truncated: r.truncated,
            next_state: r.next_state.0.clone(),
        })?;
        buffer.push(Transition {
            state,
            action,
            reward_used: r.reward_used,
            reward_orig: r.reward,
            cost: r.cost,
            next_state: r.next_state.clone(),
            done_for_bootstrap: r.terminated,
        });

        if step > agent_config.warmup_steps {
            updates += 1;
            agent.update(&buffer, updates, &mut rng)?;
        }

        if r.done() {
            current.success = r.terminated && !r.failure;
            current.failure = r.failure;
            episodes.push(std::mem::replace(
                &mut current,
                EpisodeRecord {
                    return_orig: 0.0,
                    cost_count: 0,
                    length: 0,
                    success: false,
                    failure: false,
                },
            ));
            episode += 1;
            state = env.reset(training_episode_seed(config.seed, episode));
        } else {
            state = r.next_state;
        }

        if config.eval_interval > 0 && step % config.eval_interval == 0 {
            let recs = evaluate(&agent.actor, eval_env, config.seed, config.eval_episodes)?;
            let n = recs.len().max(1) as f64;
            metrics.push(MetricsRow {
                step,
                episodic_return_mean: recs.iter().map(|e| e.return_orig).sum::<f64>() / n,
                episodic_cost_rate_mean: recs
                    .iter()
                    .map(|e| episodic_cost_rate(e.cost_count, e.length))
                    .sum::<f64>()
                    / n,
                total_cost_rate: total_cost_rate(total_cost, step),
            });
        }
    }

    Ok(TrainOutcome {
        agent,
        metrics,
        episodes,
        total_cost,
        steps: config.total_steps,
        updates,
    })
}
