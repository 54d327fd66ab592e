//! Experience replay and frozen target networks.

use ndarray::Array2;

use crate::math::Mlp;
use crate::rng::RngStream;

/// One experience tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
    pub truncated: bool,
}

/// Fixed-capacity ring of transitions; the oldest entry is overwritten first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    slots: Vec<Transition>,
    capacity: usize,
    insertions: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            slots: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            insertions: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn insertions(&self) -> u64 {
        self.insertions
    }

    pub fn push(&mut self, t: Transition) {
        if self.slots.len() < self.capacity {
            self.slots.push(t);
        } else {
            let slot = (self.insertions % self.capacity as u64) as usize;
            self.slots[slot] = t;
        }
        self.insertions += 1;
    }

    pub fn is_ready(&self, batch_size: usize) -> bool {
        batch_size > 0 && self.len() >= batch_size
    }

    /// Draws `n` transitions uniformly with replacement, or `None` while the
    /// buffer holds fewer than `n` entries.
    pub fn sample_batch(&self, n: usize, rng: &mut RngStream) -> Option<Batch> {
        if !self.is_ready(n) {
            return None;
        }
        Some(self.draw(n, rng))
    }

    /// Draws `n` transitions uniformly with replacement from whatever is
    /// stored, without the readiness check.
    ///
    /// # Panics
    /// If the buffer is empty.
    pub fn draw(&self, n: usize, rng: &mut RngStream) -> Batch {
        assert!(!self.is_empty(), "cannot draw from an empty buffer");
        let picks: Vec<&Transition> = (0..n).map(|_| &self.slots[rng.below(self.slots.len())]).collect();
        Batch::from_transitions(&picks)
    }

    /// Stored transitions in insertion order, oldest first.
    pub fn iter_oldest_first(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.slots.len() < self.capacity {
            0
        } else {
            (self.insertions % self.capacity as u64) as usize
        };
        self.slots[split..].iter().chain(self.slots[..split].iter())
    }
}

/// A sampled minibatch in row-major matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_states: Array2<f64>,
    pub terminal: Vec<bool>,
}

impl Batch {
    pub fn from_transitions(items: &[&Transition]) -> Self {
        assert!(!items.is_empty(), "empty batch");
        let n = items.len();
        let dim = items[0].state.len();
        let mut states = Array2::zeros((n, dim));
        let mut next_states = Array2::zeros((n, dim));
        for (i, t) in items.iter().enumerate() {
            assert_eq!(t.state.len(), dim, "ragged states in batch");
            assert_eq!(t.next_state.len(), dim, "ragged next states in batch");
            states.row_mut(i).assign(&ndarray::aview1(&t.state));
            next_states.row_mut(i).assign(&ndarray::aview1(&t.next_state));
        }
        Self {
            states,
            actions: items.iter().map(|t| t.action).collect(),
            rewards: items.iter().map(|t| t.reward).collect(),
            next_states,
            terminal: items.iter().map(|t| t.terminal).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Frozen copy of a value network, refreshed every `period` learning steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSnapshot {
    params: Mlp,
    period: u64,
    steps_since_sync: u64,
}

impl TargetSnapshot {
    pub fn new(live: &Mlp, period: u64) -> Self {
        assert!(period > 0, "sync period must be positive");
        Self {
            params: live.clone(),
            period,
            steps_since_sync: 0,
        }
    }

    pub(crate) fn from_parts(params: Mlp, period: u64, steps_since_sync: u64) -> Self {
        Self {
            params,
            period,
            steps_since_sync,
        }
    }

    pub fn params(&self) -> &Mlp {
        &self.params
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn steps_since_sync(&self) -> u64 {
        self.steps_since_sync
    }

    /// Copies the live parameters and resets the counter.
    pub fn sync(&mut self, live: &Mlp) {
        assert_eq!(self.params.shape(), live.shape(), "target shape differs from live network");
        self.params.clone_from(live);
        self.steps_since_sync = 0;
    }

    /// Records one learning step; syncs when the period elapses. Returns
    /// whether a sync happened.
    pub fn tick(&mut self, live: &Mlp) -> bool {
        self.steps_since_sync += 1;
        if self.steps_since_sync >= self.period {
            self.sync(live);
            true
        } else {
            false
        }
    }
}
