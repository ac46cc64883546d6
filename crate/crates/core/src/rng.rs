//! Seedable random streams.
//!
//! Every consumer gets its own ChaCha stream derived from one root seed and a
//! stream index, so parallel tasks never share generator state and results do
//! not depend on scheduling order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Root of a tree of independent generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    seed: u64,
}

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Generator for stream `stream`.
    pub fn rng(&self, stream: u64) -> SimRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// A child tree, for nested task hierarchies.
    pub fn child(&self, stream: u64) -> SeedTree {
        SeedTree {
            seed: self.rng(stream).gen(),
        }
    }
}

/// Generator seeded directly from an integer.
pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}
