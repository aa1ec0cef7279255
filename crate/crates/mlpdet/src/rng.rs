//! Deterministic stream-splitting RNG.
//!
//! Every randomized component (generator draws, replications, optimizer
//! restarts) owns its own ChaCha stream derived from the master seed, so
//! results are reproducible regardless of execution order or thread count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A (seed, stream) address in the ChaCha stream space.
///
/// `substream(i)` derives a child address by mixing the index into the
/// stream id; children never collide with the parent in practice.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    stream: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn substream(&self, index: u64) -> Self {
        Self { seed: self.seed, stream: splitmix64(self.stream ^ splitmix64(index ^ 0xa076_1d64_78bd_642f)) }
    }

    /// Instantiates the generator at this address.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
