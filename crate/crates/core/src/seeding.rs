//! Splittable deterministic seeding.
//!
//! Every stochastic component (augmentation draws, dataset generation,
//! batch sampling, weight init) derives its own RNG from a handful of u64
//! parts instead of consuming a shared sequential stream. That keeps results
//! independent of evaluation order and lets tests replay any single draw.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer. Good avalanche behavior, cheap, stable.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Mixes an ordered list of parts into a single sub-seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut state = 0x6a09_e667_f3bc_c908; // sqrt(2) fraction bits
    for &p in parts {
        state = splitmix64(state ^ splitmix64(p));
    }
    state
}

/// A ChaCha8 stream seeded from the mixed parts.
pub fn rng_from(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(parts))
}

/// Stream tags keeping unrelated consumers of the same base seed apart.
pub mod stream {
    pub const WEAK_VIEW: u64 = 1;
    pub const STRONG_VIEW: u64 = 2;
    pub const DATA_SOURCE: u64 = 3;
    pub const DATA_TARGET: u64 = 4;
    pub const DATA_SHIFT: u64 = 5;
    pub const DATA_SPLIT: u64 = 6;
    pub const MODEL_INIT: u64 = 7;
    pub const LABELED_BATCHES: u64 = 8;
    pub const UNLABELED_BATCHES: u64 = 9;
    pub const AUGMENT_ITERATION: u64 = 10;
    pub const EXPERIMENT_REPEAT: u64 = 11;
    pub const DATASET_REPEAT: u64 = 12;
}
