//! Seeded randomness.
//!
//! Every random draw in the crate comes from a ChaCha8 stream seeded with a
//! 64-bit value. Independent draws inside one sample use sub-seeds derived
//! with SplitMix64, so changing e.g. the SNR never perturbs the probe
//! symbols or the target geometry of the same sample.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `purpose`-th independent stream of a sample seed.
pub fn sub_seed(seed: u64, purpose: u64) -> u64 {
    mix(mix(seed) ^ purpose.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Pair of independent N(0, 1) variates from one Box–Muller draw.
pub fn gaussian_pair<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    let u1 = 1.0 - rng.gen::<f64>();
    let u2 = rng.gen::<f64>();
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
    (r * c, r * s)
}
