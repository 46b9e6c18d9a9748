//! Seed derivation and the uniform-integer generator used for state sampling.
//!
//! Every derived seed is a fold of SplitMix64 over its parts:
//!
//! ```text
//! h = 0x243F6A8885A308D3
//! for p in parts: h = splitmix64(h ^ p)
//! ```
//!
//! The agent seed for index `i` of a pipeline is `mix(&[master, i])` and the
//! seed of IR matrix cell `(k, m)` is `mix(&[run_seed, pipeline, checkpoint, k, m])`.
//! These functions are frozen; changing them changes every golden hash.

use rand::RngCore;

const MIX_INIT: u64 = 0x243F_6A88_85A3_08D3;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn mix(parts: &[u64]) -> u64 {
    parts.iter().fold(MIX_INIT, |h, p| splitmix64(h ^ p))
}

/// Seed of agent `index` (0 is the spotter) derived from a pipeline's master seed.
pub fn agent_seed(master: u64, index: u64) -> u64 {
    mix(&[master, index])
}

/// Uniform integer in `[0, bound)` by widening multiply with rejection
/// (Lemire). Draws are taken from `rng.next_u64()`.
pub fn uniform_below(rng: &mut dyn RngCore, bound: u64) -> u64 {
    assert!(bound > 0, "bound must be positive");
    let threshold = bound.wrapping_neg() % bound;
    loop {
        let wide = rng.next_u64() as u128 * bound as u128;
        if (wide as u64) >= threshold {
            return (wide >> 64) as u64;
        }
    }
}
