use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{Adam, QNetwork};
use super::replay::{ReplayBuffer, Transition};
use crate::seeds::{rng_for, seed_for, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    /// Widths of the hidden layers, input to output.
    pub hidden: Vec<usize>,
    pub dropout: f64,
    /// 0-based hidden stages followed by dropout.
    pub dropout_stages: Vec<usize>,
    pub gamma: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Gradient steps between target-network syncs.
    pub target_sync: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the run over which epsilon is annealed.
    pub anneal_fraction: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            hidden: vec![64, 128, 256, 512],
            dropout: 0.2,
            dropout_stages: vec![1, 2, 3],
            gamma: 0.9,
            lr: 1e-4,
            batch_size: 64,
            buffer_capacity: 10_000,
            target_sync: 100,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            anneal_fraction: 0.5,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, reason: &str| Err(Error::invalid_field(format!("dqn.{name}"), reason));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return field("hidden", "needs at least one non-zero layer width");
        }
        if self.dropout_stages.iter().any(|s| *s >= self.hidden.len()) {
            return field("dropout_stages", "refers to a hidden stage that does not exist");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return field("dropout", "must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return field("gamma", "must lie in [0, 1]");
        }
        if !(self.lr > 0.0) {
            return field("lr", "must be positive");
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.target_sync == 0 {
            return field("batch_size", "batch size, buffer capacity and target sync must be positive");
        }
        for (name, v) in [("epsilon_start", self.epsilon_start), ("epsilon_end", self.epsilon_end), ("anneal_fraction", self.anneal_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return field(name, "must lie in [0, 1]");
            }
        }
        Ok(())
    }

    pub fn dropout_per_stage(&self) -> Vec<f64> {
        (0..self.hidden.len())
            .map(|i| if self.dropout_stages.contains(&i) { self.dropout } else { 0.0 })
            .collect()
    }

    /// Linear annealing from `epsilon_start` to `epsilon_end` over the first
    /// `anneal_fraction` of a `horizon`-cycle run.
    pub fn epsilon_at(&self, cycle: usize, horizon: usize) -> f64 {
        let span = (self.anneal_fraction * horizon as f64).max(1.0);
        let t = (cycle as f64 / span).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * t
    }
}

/// One Q-learning update on a uniformly sampled batch. The target is
/// `r + γ·max_a' Q_target(s', a')`. Uses every stored transition while the
/// buffer holds fewer than `batch_size`; returns `None` when it is empty.
pub fn train_step(
    net: &mut QNetwork,
    optimizer: &mut Adam,
    buffer: &mut ReplayBuffer,
    target: &QNetwork,
    batch_size: usize,
    gamma: f64,
) -> Result<Option<f64>> {
    let idx = buffer.sample_indices(batch_size);
    if idx.is_empty() {
        return Ok(None);
    }
    let dim = net.input_dim();
    let k = idx.len();
    let mut states = Array2::zeros((k, dim));
    let mut next = Array2::zeros((k, dim));
    let mut actions = Vec::with_capacity(k);
    let mut rewards = Vec::with_capacity(k);
    for (row, i) in idx.iter().enumerate() {
        let t = buffer.get(*i).expect("sampled index");
        if t.state.len() != dim || t.next_state.len() != dim {
            return Err(Error::Domain("transition state has the wrong dimension".into()));
        }
        states.row_mut(row).assign(&ndarray::ArrayView1::from(&t.state));
        next.row_mut(row).assign(&ndarray::ArrayView1::from(&t.next_state));
        actions.push(t.action);
        rewards.push(t.reward);
    }
    let targets: Vec<f64> = if gamma > 0.0 {
        let q_next = target.evaluate_batch(next.view())?;
        q_next
            .rows()
            .into_iter()
            .zip(&rewards)
            .map(|(row, r)| r + gamma * row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    } else {
        rewards
    };
    let (loss, grads) = net.td_loss_and_gradients(states.view(), &actions, &targets, true)?;
    if !loss.is_finite() {
        return Err(Error::Domain(format!("TD loss diverged to {loss}")));
    }
    optimizer.step(net, &grads);
    Ok(Some(loss))
}

/// Online DQN learner: epsilon-greedy acting, replay and a target network.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    online: QNetwork,
    target: QNetwork,
    optimizer: Adam,
    buffer: ReplayBuffer,
    batch_size: usize,
    gamma: f64,
    target_sync: usize,
    updates: usize,
    explore_rng: ChaCha8Rng,
}

impl DqnAgent {
    pub fn new(state_dim: usize, actions: usize, cfg: &DqnConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let dims: Vec<usize> = std::iter::once(state_dim)
            .chain(cfg.hidden.iter().copied())
            .chain(std::iter::once(actions))
            .collect();
        let online = QNetwork::new(
            &dims,
            &cfg.dropout_per_stage(),
            seed_for(seed, Stream::NetworkInit, 0),
            seed_for(seed, Stream::Dropout, 0),
        )?;
        Ok(DqnAgent {
            target: online.clone(),
            optimizer: Adam::new(&online, cfg.lr),
            online,
            buffer: ReplayBuffer::new(cfg.buffer_capacity, seed),
            batch_size: cfg.batch_size,
            gamma: cfg.gamma,
            target_sync: cfg.target_sync,
            updates: 0,
            explore_rng: rng_for(seed, Stream::Exploration, 0),
        })
    }

    pub fn online(&self) -> &QNetwork {
        &self.online
    }

    pub fn online_mut(&mut self) -> &mut QNetwork {
        &mut self.online
    }

    /// Replaces both networks, e.g. from a checkpoint.
    pub fn load_weights(&mut self, net: &QNetwork) -> Result<()> {
        if net.dims() != self.online.dims() {
            return Err(Error::Config(format!(
                "checkpoint dims {:?} do not match network {:?}",
                net.dims(),
                self.online.dims()
            )));
        }
        self.online.copy_weights_from(net);
        self.target.copy_weights_from(net);
        Ok(())
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    /// Greedy action with probability `1 - epsilon`, otherwise uniform.
    pub fn act(&mut self, state: &[f64], epsilon: f64) -> Result<usize> {
        let q = self.online.evaluate(state)?;
        if self.explore_rng.random_bool(epsilon.clamp(0.0, 1.0)) {
            return Ok(self.explore_rng.random_range(0..q.len()));
        }
        Ok(argmax(&q))
    }

    pub fn remember(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    /// One training step, syncing the target network every `target_sync` steps.
    pub fn learn(&mut self) -> Result<Option<f64>> {
        let loss = train_step(
            &mut self.online,
            &mut self.optimizer,
            &mut self.buffer,
            &self.target,
            self.batch_size,
            self.gamma,
        )?;
        if loss.is_some() {
            self.updates += 1;
            if self.updates.is_multiple_of(self.target_sync) {
                self.target.copy_weights_from(&self.online);
            }
        }
        Ok(loss)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
