//! Seed derivation for deterministic substreams.
//!
//! Every random stage (splitting, alignment restarts, resampling, bootstrap
//! replicates, experiment repetitions) draws from its own ChaCha stream whose
//! seed is a hash of a parent seed and a path of integer tags. Streams never
//! depend on how many values a sibling stage consumed, so any stage can be
//! re-run in isolation and parallel evaluation is bit-identical to serial.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random source used throughout the crate.
pub type CredalRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `parent` and a path of tags.
pub fn derive_seed(parent: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(parent), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// A fresh random source for the substream `tags` under `parent`.
pub fn substream(parent: u64, tags: &[u64]) -> CredalRng {
    CredalRng::seed_from_u64(derive_seed(parent, tags))
}

/// Stage tags used by the test pipelines.
pub(crate) mod tag {
    pub const SPLIT: u64 = 1;
    pub const BANDWIDTH: u64 = 2;
    pub const ALIGN: u64 = 3;
    pub const REDRAW: u64 = 4;
    pub const BOOTSTRAP: u64 = 5;
    pub const SUBTEST: u64 = 6;
    pub const RESTART: u64 = 7;
    pub const REPLICATE: u64 = 8;
}
