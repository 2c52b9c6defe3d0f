use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::Action;
use crate::error::{Error, Result};
use crate::perturb::NoiseState;
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: NoiseState,
    pub action: Action,
    pub reward: f64,
    pub next: NoiseState,
}

/// Fixed-capacity ring; the oldest transition is overwritten first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity.min(4096)),
            next: 0,
            inserted: 0,
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

    /// Total pushes since creation, including evicted ones.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
        self.inserted += 1;
    }

    /// Transitions in insertion order, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity { 0 } else { self.next };
        self.items[split..].iter().chain(&self.items[..split])
    }

    pub fn sample_indices(&self, batch_size: usize, rng: &mut Stream) -> Result<Vec<usize>> {
        if batch_size == 0 || batch_size > self.items.len() {
            return Err(Error::invalid(format!(
                "cannot sample {batch_size} transitions from a buffer of {}",
                self.items.len()
            )));
        }
        Ok(sample(rng, self.items.len(), batch_size).into_vec())
    }

    /// Uniform sample without replacement.
    pub fn sample(&self, batch_size: usize, rng: &mut Stream) -> Result<Vec<Transition>> {
        Ok(self
            .sample_indices(batch_size, rng)?
            .into_iter()
            .map(|i| self.items[i])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturb::{NoiseBounds, NoiseFamily};
    use crate::rng::substream;

    fn t(r: f64) -> Transition {
        let s = NoiseState::new(0.0, 0.1, NoiseFamily::Gaussian, NoiseBounds::default()).unwrap();
        Transition { state: s, action: Action::ZERO, reward: r, next: s }
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut b = ReplayBuffer::new(2);
        for r in [1.0, 2.0, 3.0] {
            b.push(t(r));
        }
        assert_eq!(b.len(), 2);
        assert_eq!(b.inserted(), 3);
        let rewards: Vec<f64> = b.iter().map(|x| x.reward).collect();
        assert_eq!(rewards, vec![2.0, 3.0]);
    }

    #[test]
    fn full_batch_is_a_permutation() {
        let mut b = ReplayBuffer::new(10);
        for r in 0..7 {
            b.push(t(r as f64));
        }
        let mut idx = b.sample_indices(7, &mut substream(1, "replay")).unwrap();
        idx.sort();
        assert_eq!(idx, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn sampling_is_reproducible_and_guarded() {
        let mut b = ReplayBuffer::new(10);
        for r in 0..10 {
            b.push(t(r as f64));
        }
        let x = b.sample_indices(4, &mut substream(9, "replay")).unwrap();
        let y = b.sample_indices(4, &mut substream(9, "replay")).unwrap();
        assert_eq!(x, y);
        assert!(b.sample(11, &mut substream(9, "replay")).is_err());
    }
}
