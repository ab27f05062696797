//! A small deep Q-network built on `ndarray`: rectifier MLP with dropout,
//! experience replay, a periodically synced target network, and the two
//! Aggregator reward functions.

mod agent;
pub mod checkpoint;
mod network;
mod replay;
mod reward;

pub use agent::{argmax, train_step, DqnAgent, DqnConfig};
pub use network::{Adam, Dense, Gradients, QNetwork};
pub use replay::{ReplayBuffer, Transition};
pub use reward::{reward_r1, reward_r2, RewardKind, RewardNorm, RewardTracker};
