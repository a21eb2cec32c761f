use alloc::collections::VecDeque;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// One joint step of the learning team.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// Network inputs per team member (dead members: zeros).
    pub obs: Vec<Vec<f64>>,
    pub state: Vec<f64>,
    pub actions: Vec<usize>,
    /// Joint team reward.
    pub reward: f64,
    pub next_obs: Vec<Vec<f64>>,
    pub next_state: Vec<f64>,
    pub terminal: bool,
    /// Members alive at `t` (their actions count).
    pub alive: Vec<bool>,
    /// Members alive at `t + 1` (their successor values bootstrap).
    pub next_alive: Vec<bool>,
    pub masks: Vec<Vec<bool>>,
    pub next_masks: Vec<Vec<bool>>,
}

impl Transition {
    pub fn num_agents(&self) -> usize {
        self.obs.len()
    }
}

/// Fixed-capacity FIFO buffer with uniform sampling (with replacement).
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: VecDeque<T>,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            items: VecDeque::with_capacity(capacity.clamp(1, 1 << 16)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends, evicting the oldest item when full.
    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    pub fn get(&self, i: usize) -> Option<&T> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    /// `n` uniform draws; empty when the buffer is empty.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&T> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| &self.items[rng.gen_range(0..self.items.len())]).collect()
    }
}
