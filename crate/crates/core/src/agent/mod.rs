//! TD3 actor-critic agent and its training loop.

mod buffer;
mod log;
mod td3;
mod train;

pub use buffer::{ReplayBuffer, Transition};
pub use log::{read_jsonl, write_jsonl, TrajectoryRecord};
pub use td3::{critic_target, greedy_action, select_action, AgentConfig, Td3Agent, UpdateReport};
pub use train::{
    evaluate, evaluation_episode_seed, run_episode, train, training_episode_seed, TrainConfig,
    TrainOutcome,
};
