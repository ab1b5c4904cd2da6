use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One experience tuple `⟨s, a, r, s'⟩`. `weight` scales this tuple's term
/// in the loss; sampled experience always carries weight 1. Feature
/// vectors are shared, so cloning a transition is cheap.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Arc<Tensor>,
    pub a: usize,
    pub r: f64,
    pub s_next: Arc<Tensor>,
    pub terminal: bool,
    pub weight: f64,
}

impl Transition {
    pub fn new(s: Tensor, a: usize, r: f64, s_next: Tensor, terminal: bool) -> Self {
        Self::shared(Arc::new(s), a, r, Arc::new(s_next), terminal)
    }

    pub fn shared(s: Arc<Tensor>, a: usize, r: f64, s_next: Arc<Tensor>, terminal: bool) -> Self {
        Self {
            s,
            a,
            r,
            s_next,
            terminal,
            weight: 1.0,
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }
}

/// Fixed-capacity FIFO of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("replay capacity must be positive"));
        }
        Ok(Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        })
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

    /// Appends, evicting the oldest entry when full.
    pub fn push(&mut self, tr: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(tr);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.items.get(index)
    }
}

/// Uniform sampling with replacement.
pub fn sample_batch<R: Rng>(
    buffer: &ReplayBuffer,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<Transition>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    if buffer.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    Ok((0..batch_size)
        .map(|_| buffer.items[rng.gen_range(0..buffer.len())].clone())
        .collect())
}
