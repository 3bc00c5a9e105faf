//! Derivation of independent random streams from a single master seed.
//!
//! Every unit of work (a bootstrap draw, a CV split, a calibration
//! replicate) owns a stream derived from the master seed and a small
//! tag path such as `[WEIGHTS, b]` or `[SPLIT, b, k, attempt]`. Streams
//! are independent of execution order, so parallel runs reproduce the
//! sequential result bit for bit.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Collapse `(master, tags...)` into one well-mixed 64-bit seed
/// (SplitMix64 absorption).
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut state = mix(master.wrapping_add(GAMMA));
    for &t in tags {
        state = mix(state.wrapping_add(GAMMA) ^ mix(t.wrapping_add(GAMMA)));
    }
    state
}

/// A ChaCha stream keyed by `(master, tags...)`.
pub fn rng_for(master: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tags))
}
