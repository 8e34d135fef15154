//! Counter-based randomness.
//!
//! Every random decision in the pipeline is a pure function of a key built
//! from `(seed, stream, item id, ...)`, so results do not depend on item
//! order or on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one well-mixed key.
pub fn key(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x243F_6A88_85A3_08D3, |acc, &p| mix64(acc ^ mix64(p)))
}

/// Uniform draw in `[0, 1)` from a key, using the top 53 bits.
#[inline]
pub fn unit(k: u64) -> f64 {
    (k >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A stream generator for callers that need many draws under one key.
pub fn stream(k: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(k)
}

/// 64-bit FNV-1a; stable across platforms and toolchains.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Stream identifiers, so that draws for different purposes never collide.
pub(crate) mod streams {
    pub const SPLIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const INIT: u64 = 3;
    pub const LAST_EPOCH: u64 = 4;
    pub const MULTINOMIAL: u64 = 5;
    pub const SUBSAMPLE: u64 = 6;
    pub const SYNTH: u64 = 7;
}

/// Half-up rounding of a non-negative quantity to an integer count.
pub fn round_half_up(x: f64) -> usize {
    debug_assert!(x >= 0.0);
    (x + 0.5).floor() as usize
}
