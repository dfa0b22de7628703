//! Counter-based random streams.
//!
//! Each random decision in a run is drawn from a generator keyed by
//! `(seed, purpose, counter)`, so two runs that share a seed see identical
//! minibatches and noise regardless of how the rest of the state is
//! represented.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. The discriminant is mixed into the key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Minibatch = 2,
    Noise = 3,
    ClientPick = 4,
    ClientSet = 5,
    LocalBatch = 6,
    Generator = 7,
    Audit = 8,
}

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

    /// Generator for `(purpose, counter)`.
    pub fn rng(&self, purpose: Purpose, counter: u64) -> ChaCha8Rng {
        self.rng2(purpose, counter, 0)
    }

    /// Generator for `(purpose, counter, sub)`; `sub` separates e.g. clients
    /// within one round.
    pub fn rng2(&self, purpose: Purpose, counter: u64, sub: u64) -> ChaCha8Rng {
        let mut key = splitmix(self.seed ^ 0x5eed_0000_0000_0000);
        key = splitmix(key ^ purpose as u64);
        key = splitmix(key ^ counter);
        key = splitmix(key ^ sub.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        ChaCha8Rng::seed_from_u64(key)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
