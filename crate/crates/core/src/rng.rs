//! Seed derivation.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by a
//! 64-bit seed plus a named stream. Seeds for nested work (replications,
//! outcome draws) are derived by mixing coordinates into a parent seed, so a
//! result never depends on the order in which tasks execute.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a hash of a stream or label name.
pub fn hash_label(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derives a child seed from a parent seed and a sequence of coordinates.
pub fn derive_seed(parent: u64, coords: &[u64]) -> u64 {
    coords.iter().fold(mix64(parent ^ GOLDEN), |acc, &c| {
        mix64(acc.wrapping_add(GOLDEN) ^ mix64(c.wrapping_add(GOLDEN)))
    })
}

/// Generator for a named stream under `seed`.
pub fn stream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(hash_label(name));
    rng
}
