//! Seed derivation.
//!
//! Per-experiment and per-stream seeds are derived with the SplitMix64
//! finalizer applied to `base + GAMMA * (index + 1)`. The finalizer is a
//! bijection on `u64` and `GAMMA` is odd, so distinct indices under one base
//! seed always receive distinct seeds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic seed for item `index` under `base`.
pub fn mix_seed(base: u64, index: u64) -> u64 {
    splitmix64(base.wrapping_add(GAMMA.wrapping_mul(index.wrapping_add(1))))
}

/// Named sub-stream of a seed, so independent consumers never share draws.
pub fn stream_seed(seed: u64, stream: &str) -> u64 {
    // FNV-1a over the label
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    mix_seed(seed, h)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
