//! Seeded, splittable random streams.
//!
//! Every stochastic stage draws from a ChaCha8 stream whose seed is derived
//! from a master seed and a path of stream labels, so results do not depend
//! on thread scheduling or on which other replicates were run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit seed from `seed` and a path of labels.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut state = seed;
    let mut out = splitmix64(&mut state);
    for &p in path {
        state ^= out ^ p.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        out = splitmix64(&mut state);
    }
    out
}

/// Independent stream for `(seed, path)`.
pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    let mut state = derive_seed(seed, path);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Stream labels used by the experiment runner.
pub mod label {
    pub const SIMULATE: u64 = 1;
    pub const MAP: u64 = 2;
    pub const GRID: u64 = 3;
    pub const COV_FULL: u64 = 4;
    pub const COV_BLOCKS: u64 = 5;
    pub const MCMC: u64 = 6;
    pub const EVIDENCE: u64 = 7;
}
