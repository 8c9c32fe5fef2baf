//! Seeded random streams.
//!
//! A run owns one seed; each consumer (initialization, dropout, shuffling,
//! perturbation) gets its own ChaCha stream derived from `(seed, name)`, so
//! adding draws in one consumer never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SeededRng = ChaCha8Rng;

pub fn stream(seed: u64, consumer: &str) -> SeededRng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(consumer.as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}
