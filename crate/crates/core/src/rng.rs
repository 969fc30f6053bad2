//! Counter-based seed derivation.
//!
//! Every trajectory owns an independent ChaCha8 stream whose key is a pure
//! function of `(master_seed, trajectory_index)`. Within a trajectory the
//! ChaCha block counter plays the role of the step index, so a draw at step
//! `k` of trajectory `t` never depends on which thread ran which trajectory.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with a sequence of counters.
pub fn derive_seed(master: u64, counters: &[u64]) -> u64 {
    counters.iter().fold(mix64(master), |acc, &c| {
        mix64(acc ^ mix64(c.wrapping_add(GOLDEN)))
    })
}

/// Seed of trajectory `index` under `master`.
pub fn trajectory_seed(master: u64, index: u64) -> u64 {
    derive_seed(master, &[index])
}

pub fn stream_from_seed(seed: u64) -> StreamRng {
    let mut key = [0u8; 32];
    for (i, chunk) in key.chunks_mut(8).enumerate() {
        chunk.copy_from_slice(&mix64(seed ^ (i as u64).wrapping_mul(GOLDEN)).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

pub fn trajectory_stream(master: u64, index: u64) -> StreamRng {
    stream_from_seed(trajectory_seed(master, index))
}

/// Uniform draw in [0, 1) with 53 random bits.
#[inline]
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
