//! Seeded random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream derived from a
//! base seed and a fixed tag, so adding draws in one component never shifts
//! the sequence seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h = mix(seed);
    for b in tag.bytes() {
        h = mix(h ^ u64::from(b));
    }
    h
}

pub fn stream(seed: u64, tag: &str) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, tag))
}
