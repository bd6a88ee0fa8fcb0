//! Trajectory replay buffer: a FIFO ring sampled uniformly with replacement.

use rand::Rng;

use crate::agent::features::RawObservation;
use crate::agent::state::{AuxScalars, AUX_DIM};
use crate::env::Action;
use crate::error::{Error, Result};

/// One frame transition. States are stored as raw observation + auxiliary
/// scalars so feature slots can be rebuilt with the current provider at
/// update time; the pre-squash sample makes replayed log-probs exact.
#[derive(Debug, Clone)]
pub struct Transition {
    pub raw: RawObservation,
    pub aux: [f64; AUX_DIM],
    pub action: Action,
    pub presquash: Vec<f64>,
    pub reward: f64,
    pub next_raw: RawObservation,
    pub next_aux: [f64; AUX_DIM],
    pub done: bool,
}

impl Transition {
    pub fn aux_scalars(&self) -> AuxScalars {
        AuxScalars(self.aux)
    }

    pub fn next_aux_scalars(&self) -> AuxScalars {
        AuxScalars(self.next_aux)
    }
}

/// One coded sequence plus episode metadata.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    pub seed: u64,
    pub r_tar: f64,
    pub achieved_avg_bpp: f64,
    pub mean_d_mse: f64,
    /// Undiscounted sum of rewards.
    pub total_return: f64,
}

/// Ring of trajectories with FIFO eviction.
#[derive(Debug, Default)]
pub struct ReplayBuffer {
    ring: std::collections::VecDeque<Trajectory>,
    capacity: usize,
    batch_size: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, batch_size: usize) -> Self {
        ReplayBuffer {
            ring: std::collections::VecDeque::with_capacity(capacity),
            capacity,
            batch_size,
        }
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }

    pub fn push(&mut self, trajectory: Trajectory) {
        if self.ring.len() == self.capacity {
            self.ring.pop_front();
        }
        self.ring.push_back(trajectory);
    }

    /// Samples `batch_size` trajectories uniformly with replacement.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<Vec<&Trajectory>> {
        if self.ring.is_empty() {
            return Err(Error::InvalidArgument("sample from empty replay buffer".into()));
        }
        Ok((0..self.batch_size)
            .map(|_| &self.ring[rng.gen_range(0..self.ring.len())])
            .collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Trajectory> {
        self.ring.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dummy_trajectory(seed: u64) -> Trajectory {
        let raw = RawObservation {
            c_norm: 0.2,
            k: 1.0,
            scene: 0.0,
            c_ratio: 1.0,
            d_prev_norm: 0.0,
            c_raw: 1.0,
            c_prev_raw: 1.0,
        };
        Trajectory {
            transitions: vec![Transition {
                raw,
                aux: [0.0; AUX_DIM],
                action: Action { lambda: 512.0, m: 1.0 },
                presquash: vec![0.0, 0.0],
                reward: -1.0,
                next_raw: raw,
                next_aux: [0.0; AUX_DIM],
                done: true,
            }],
            seed,
            r_tar: 20.0,
            achieved_avg_bpp: 20.0,
            mean_d_mse: 0.02,
            total_return: -1.0,
        }
    }

    #[test]
    fn fifo_eviction_at_capacity() {
        let mut buf = ReplayBuffer::new(200, 32);
        for i in 0..201 {
            buf.push(dummy_trajectory(i));
        }
        assert_eq!(buf.len(), 200);
        assert_eq!(buf.iter().next().unwrap().seed, 1, "oldest evicted");
        assert_eq!(buf.iter().last().unwrap().seed, 200);
    }

    #[test]
    fn sampling_with_one_stored_gives_copies() {
        let mut buf = ReplayBuffer::new(200, 32);
        buf.push(dummy_trajectory(7));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = buf.sample(&mut rng).unwrap();
        assert_eq!(batch.len(), 32);
        assert!(batch.iter().all(|t| t.seed == 7));
    }

    #[test]
    fn empty_buffer_rejects_sampling() {
        let buf = ReplayBuffer::new(200, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(buf.sample(&mut rng).is_err());
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let mut buf = ReplayBuffer::new(200, 32);
        for i in 0..50 {
            buf.push(dummy_trajectory(i));
        }
        let seeds_a: Vec<u64> = buf
            .sample(&mut ChaCha8Rng::seed_from_u64(4))
            .unwrap()
            .iter()
            .map(|t| t.seed)
            .collect();
        let seeds_b: Vec<u64> = buf
            .sample(&mut ChaCha8Rng::seed_from_u64(4))
            .unwrap()
            .iter()
            .map(|t| t.seed)
            .collect();
        assert_eq!(seeds_a, seeds_b);
    }
}
