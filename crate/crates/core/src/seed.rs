//! Named random streams derived from a single user seed.
//!
//! Every stochastic sub-procedure draws from its own ChaCha stream so that
//! changing how often one of them samples never shifts the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Folds = 1,
    Batches = 2,
    Corruption = 3,
    Synthetic = 4,
}

/// A generator for `stream` under `seed`, further split by `index`
/// (fold number, repetition, ...).
pub fn rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 48) | (index & 0xFFFF_FFFF_FFFF));
    rng
}

/// Mixes `parts` into `seed` (SplitMix64 finalizer per part), for seeds of
/// nested procedures such as per-fold training runs.
pub fn derive(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(seed, |acc, &p| {
        let mut z = acc ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    })
}
