use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ActionVector;
use crate::error::{Error, Result};

/// `(s, a, r, s')` with standardized state rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<Vec<f64>>,
    pub action: ActionVector,
    pub reward: f64,
    pub next_state: Vec<Vec<f64>>,
}

impl Transition {
    pub fn validate(&self) -> Result<()> {
        let n = self.state.len();
        if self.action.bits.len() != n || self.next_state.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "transition with {n} states, {} action bits, {} next states",
                self.action.bits.len(),
                self.next_state.len()
            )));
        }
        Ok(())
    }
}

/// Fixed-capacity ring buffer; the oldest entry is overwritten when full.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: Vec<T>,
    next: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("replay capacity must be >= 1".into()));
        }
        Ok(Self { capacity, items: Vec::with_capacity(capacity), next: 0 })
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

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Uniform sample without replacement of `min(batch_size, len)` entries.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<&T>> {
        if self.items.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let m = batch_size.min(self.items.len());
        Ok(rand::seq::index::sample(rng, self.items.len(), m).into_iter().map(|i| &self.items[i]).collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }
}
