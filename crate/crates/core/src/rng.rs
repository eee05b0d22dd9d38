//! Seeded randomness.
//!
//! Every random draw in the crate goes through [`SolverRng`], a ChaCha8
//! stream cipher generator seeded from a single `u64`. Gaussian variates use
//! the Ziggurat sampler from `rand_distr::StandardNormal`; ports to other
//! languages reproduce the distributions, not the bit streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SolverRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SolverRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn standard_normal(rng: &mut SolverRng) -> f64 {
    rng.sample(StandardNormal)
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Stable hash of a sequence of words: each word is folded into the state and
/// the state is passed through [`splitmix64`].
///
/// `derive_seed(base, &[i, j, t])` is the seed of trial `t` in grid cell
/// `(i, j)`. The value only depends on its inputs, so adding trials or cells
/// never changes the seeds of existing ones.
pub fn derive_seed(base: u64, words: &[u64]) -> u64 {
    let mut h = splitmix64(base);
    for &w in words {
        h = splitmix64(h ^ w);
    }
    h
}
