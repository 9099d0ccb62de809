//! Deterministic substream derivation.
//!
//! Every random draw in the crate comes from a ChaCha stream derived from the
//! run seed and a logical task path (stream kind, sweep, cell, node, ...).
//! Tasks never share a stream, so results are identical for a fixed seed no
//! matter how work is scheduled across threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Logical stream kinds; the substream path starts with one of these.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    BetaRow = 1,
    Sigma = 2,
    Gamma = 3,
    Eta = 4,
    SimGraph = 5,
    SimPerturb = 6,
    SimPrecision = 7,
    SimData = 8,
}

#[inline]
fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent generator for the task identified by
/// `(seed, stream, path)`.
pub fn substream(seed: u64, stream: Stream, path: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix64(seed ^ 0x5354_4747_4D00_0001);
    h = splitmix64(h ^ (stream as u64));
    for &label in path {
        h = splitmix64(h ^ label);
    }
    h = splitmix64(h ^ (path.len() as u64));

    let mut seed_bytes = [0u8; 32];
    let mut state = h;
    for chunk in seed_bytes.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed_bytes)
}
