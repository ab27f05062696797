use std::collections::VecDeque;

use rand::seq::index;
use rand_chacha::ChaCha8Rng;

use crate::seeds::{rng_for, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
}

/// Fixed-capacity FIFO experience store with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: VecDeque<Transition>,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Self {
        let capacity = capacity.max(1);
        ReplayBuffer {
            capacity,
            entries: VecDeque::with_capacity(capacity.min(4096)),
            rng: rng_for(seed, Stream::Replay, 0),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends a transition, evicting the oldest one when full.
    pub fn push(&mut self, t: Transition) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(t);
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.entries.get(i)
    }

    /// Indices of up to `batch` distinct entries, drawn uniformly.
    pub fn sample_indices(&mut self, batch: usize) -> Vec<usize> {
        let k = batch.min(self.entries.len());
        index::sample(&mut self.rng, self.entries.len(), k).into_vec()
    }

    pub fn sample(&mut self, batch: usize) -> Vec<&Transition> {
        let idx = self.sample_indices(batch);
        idx.into_iter().map(|i| &self.entries[i]).collect()
    }
}
