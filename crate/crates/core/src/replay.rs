use std::collections::VecDeque;

use rand::Rng as _;

use crate::batch::Batch;
use crate::env::Transition;
use crate::numerics::Rng;

/// Bounded FIFO of transitions with uniform sampling (with replacement).
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            inserted: 0,
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

    /// Total transitions ever pushed, evicted ones included.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    /// Appends a transition, evicting the oldest when full.
    pub fn push(&mut self, transition: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(transition);
        self.inserted += 1;
    }

    /// Oldest-first access.
    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.items.get(index)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    pub fn sample_indices(&self, rng: &mut Rng, n: usize) -> Vec<usize> {
        assert!(!self.items.is_empty(), "sampling from an empty buffer");
        (0..n)
            .map(|_| rng.random_range(0..self.items.len()))
            .collect()
    }

    pub fn sample(&self, rng: &mut Rng, n: usize) -> Batch {
        let idx = self.sample_indices(rng, n);
        Batch::from_transitions(idx.iter().map(|&i| &self.items[i]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::seeded;

    fn tr(k: usize) -> Transition {
        Transition {
            state: vec![k as f64],
            action: vec![0.0],
            reward: k as f64,
            next_state: vec![k as f64 + 1.0],
            done: false,
        }
    }

    #[test]
    fn eviction_keeps_last_capacity_items_in_order() {
        let mut buf = ReplayBuffer::new(10);
        for k in 0..37 {
            buf.push(tr(k));
            assert!(buf.len() <= 10);
        }
        let kept: Vec<f64> = buf.iter().map(|t| t.reward).collect();
        assert_eq!(kept, (27..37).map(|k| k as f64).collect::<Vec<_>>());
        assert_eq!(buf.inserted(), 37);
    }

    #[test]
    fn sampling_is_uniform() {
        let mut buf = ReplayBuffer::new(100);
        for k in 0..100 {
            buf.push(tr(k));
        }
        let mut rng = seeded(8);
        let mut counts = vec![0usize; 100];
        for i in buf.sample_indices(&mut rng, 1_000_000) {
            counts[i] += 1;
        }
        for c in counts {
            assert!((c as f64 - 10_000.0).abs() < 500.0, "count {c}");
        }
    }

    #[test]
    fn batch_rows_match_transitions() {
        let mut buf = ReplayBuffer::new(4);
        for k in 0..4 {
            buf.push(tr(k));
        }
        let mut rng = seeded(1);
        let b = buf.sample(&mut rng, 16);
        for i in 0..b.len() {
            let t = b.transition(i);
            assert_eq!(t.reward, t.state[0]);
            assert_eq!(t.next_state[0], t.state[0] + 1.0);
        }
    }
}
