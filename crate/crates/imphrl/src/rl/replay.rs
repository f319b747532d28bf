//! FIFO replay buffer with seeded uniform sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::policy::ACTION_DIM;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub primitive: usize,
    pub theta: [f64; ACTION_DIM],
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    /// Next write position once the buffer is full.
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            data: Vec::new(),
            head: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Uniform with replacement; deterministic under a seeded rng.
    pub fn sample_indices(&self, batch: usize, rng: &mut impl Rng) -> Vec<usize> {
        (0..batch).map(|_| rng.gen_range(0..self.data.len())).collect()
    }

    pub fn get(&self, idx: usize) -> &Transition {
        &self.data[idx]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn t(v: f64) -> Transition {
        Transition {
            obs: vec![v],
            primitive: 0,
            theta: [0.0; ACTION_DIM],
            reward: v,
            next_obs: vec![v],
            done: false,
        }
    }

    #[test]
    fn fifo_eviction_overwrites_oldest() {
        let mut buf = ReplayBuffer::new(3);
        for i in 0..5 {
            buf.push(t(i as f64));
        }
        assert_eq!(buf.len(), 3);
        let rewards: Vec<f64> = (0..3).map(|i| buf.get(i).reward).collect();
        // slots 0 and 1 were overwritten by items 3 and 4
        assert_eq!(rewards, vec![3.0, 4.0, 2.0]);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let mut buf = ReplayBuffer::new(100);
        for i in 0..50 {
            buf.push(t(i as f64));
        }
        let a = buf.sample_indices(16, &mut ChaCha20Rng::seed_from_u64(3));
        let b = buf.sample_indices(16, &mut ChaCha20Rng::seed_from_u64(3));
        assert_eq!(a, b);
        assert!(a.iter().all(|&i| i < 50));
    }
}
