//! Reproducible randomness plumbing.
//!
//! All simulation and assignment code draws from ChaCha8 streams addressed
//! by an [`RngSeed`]: a (seed, stream) pair of u64s. Child seeds for
//! strata, replications, retries, and chunks are derived by hashing a tag
//! into the seed with the SplitMix64 finalizer, so any component can be
//! re-run in isolation and results are identical across platforms and
//! thread counts.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Address of one random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngSeed {
    pub seed: u64,
    pub stream: u64,
}

/// SplitMix64 finalizer; bijective on u64.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngSeed {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngSeed { seed, stream }
    }

    /// Derive an independent child stream for a sub-task addressed by `tag`.
    pub fn child(self, tag: u64) -> Self {
        let mut h = self.seed;
        h = splitmix64(h ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        h = splitmix64(h ^ self.stream);
        RngSeed {
            seed: h,
            stream: self.stream,
        }
    }

    /// Instantiate the generator for this address.
    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

impl From<u64> for RngSeed {
    fn from(seed: u64) -> Self {
        RngSeed { seed, stream: 0 }
    }
}
