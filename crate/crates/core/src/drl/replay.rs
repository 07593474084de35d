use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// One experience `(S_t, A_t, R_t, S_{t+1}, done)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// Fixed-capacity ring buffer; the oldest transition is overwritten first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity.min(4096)),
            cursor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, transition: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(transition);
        } else {
            self.items[self.cursor] = transition;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Uniform indices without replacement.
    pub fn sample_indices(&self, batch_size: usize, rng: &mut SimRng) -> Result<Vec<usize>> {
        if batch_size > self.items.len() {
            return Err(Error::InsufficientSamples {
                requested: batch_size,
                available: self.items.len(),
            });
        }
        Ok(index::sample(rng, self.items.len(), batch_size).into_vec())
    }

    pub fn sample(&self, batch_size: usize, rng: &mut SimRng) -> Result<Vec<&Transition>> {
        Ok(self
            .sample_indices(batch_size, rng)?
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }
}
