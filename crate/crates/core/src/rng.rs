//! Seed derivation for counter-based randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// splitmix64 finalizer.
pub(crate) fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one 64-bit key.
pub(crate) fn derive(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(GOLDEN, |acc, &w| mix(acc.wrapping_add(GOLDEN) ^ mix(w)))
}

pub(crate) fn rng_for(words: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(words))
}
