//! Seeded, splittable random streams.
//!
//! Every consumer derives its own stream from `(seed, label)` so results do
//! not depend on scheduling: image `x` always sees the same draws whether it
//! is processed first, last, or on another thread.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Root of a family of deterministic streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    seed: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream for `label`.
    pub fn split(&self, label: &str) -> SeedStream {
        SeedStream { seed: derive_seed(self.seed, label) }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    /// Shorthand for `split(label).rng()`.
    pub fn rng_for(&self, label: &str) -> ChaCha8Rng {
        self.split(label).rng()
    }
}

pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}
