//! Deterministic stream derivation for parallel sampling.
//!
//! Every Brownian channel and every Monte Carlo sample owns its own
//! counter-derived RNG stream, so results do not depend on the order in
//! which channels or samples are materialized, nor on the thread schedule.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain separators so that different consumers of the same user seed do
/// not collide.
pub(crate) const DOMAIN_LATTICE: u64 = 0x4c41_5454;
pub(crate) const DOMAIN_EXACT: u64 = 0x4f55_5853;
pub(crate) const DOMAIN_SAMPLE: u64 = 0x4d43_5350;

/// SplitMix64 finalizer; the standard 64-bit avalanche.
#[inline]
fn finalize(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Collapses a seed plus a list of stream coordinates into one 64-bit seed.
/// The multiply before each absorb keeps the combine order-sensitive.
pub fn mix(seed: u64, parts: &[u64]) -> u64 {
    let mut h = finalize(seed);
    for &p in parts {
        h = finalize(h.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ p);
    }
    h
}

/// RNG for one derived stream. ChaCha8 keeps streams independent and the
/// output identical across platforms.
pub fn stream_rng(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, parts))
}
