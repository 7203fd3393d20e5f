//! Keyed random streams.
//!
//! Every consumer of randomness asks for a stream by `(domain, key)`. The
//! stream is a ChaCha8 generator seeded from the master seed and the domain,
//! with the ChaCha stream id set to `key`. Two streams with different keys
//! never overlap, so work split by key (path chunks, bridge segments per
//! iteration, independent chains) gives the same numbers in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains. Kept distinct so that e.g. path noise and bridge
/// proposals drawn under the same master seed are independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    PathNoise = 1,
    Bridge = 2,
    Coefficients = 3,
    Chain = 4,
    Refinement = 5,
    Experiment = 6,
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

    pub fn rng(&self, domain: Domain, key: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.seed ^ splitmix64(domain as u64)));
        rng.set_stream(key);
        rng
    }

    /// A derived master seed, e.g. one per replication of an experiment.
    pub fn child(&self, index: u64) -> SeedStream {
        SeedStream::new(splitmix64(self.seed.wrapping_add(splitmix64(index ^ 0x5eed))))
    }
}

/// Packs an (iteration, segment) pair into one stream key.
pub fn pair_key(major: u64, minor: u64) -> u64 {
    (major << 32) | (minor & 0xffff_ffff)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
