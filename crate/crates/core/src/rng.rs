//! Seeding conventions shared by every stochastic stage.
//!
//! All randomness flows through [`ChaCha8Rng`]. Independent streams (one per
//! generated file, one per network init, ...) are derived from a root seed
//! with [`child_seed`], so work can be split or reordered without changing
//! any stream.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `index`-th child stream of `seed`.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn child(seed: u64, index: u64) -> Rng {
    seeded(child_seed(seed, index))
}

/// Uniform draw on the open interval (0, 1) from the top 53 bits of one
/// `next_u64` call.
pub fn open01(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw on the open interval (lo, hi).
pub fn uniform(rng: &mut impl RngCore, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * open01(rng)
}

/// Uniform integer in `0..n` (`n > 0`).
pub fn below(rng: &mut impl RngCore, n: usize) -> usize {
    ((open01(rng) * n as f64) as usize).min(n - 1)
}

/// In-place Fisher-Yates shuffle driven by [`below`].
pub fn shuffle<T>(rng: &mut impl RngCore, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = below(rng, i + 1);
        items.swap(i, j);
    }
}
