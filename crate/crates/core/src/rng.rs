//! Counter-based seed splitting.
//!
//! Every random draw in a campaign is addressed by `(master_seed, index)`:
//! ChaCha8 keyed by the master seed, with the index selecting the stream.
//! A trial therefore sees the same numbers no matter which thread runs it
//! or in which order trials are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator for stream `index` under `master`.
pub fn stream(master: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

/// Derive a child seed from `(master, index)` with SplitMix64 finalisation.
///
/// Used where a nested level of streams is needed (sample → trial).
pub fn split_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
