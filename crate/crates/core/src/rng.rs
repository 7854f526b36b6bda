//! Portable seeded random streams.
//!
//! Generator: ChaCha20 (`rand_chacha` 0.3), a counter-based stream cipher RNG
//! whose output is fixed by its key, stream id and word position and does not
//! depend on platform or thread scheduling.
//!
//! Stream derivation (version 1): the 256-bit key is the little-endian
//! `master_seed` in bytes 0..8, zeros elsewhere; the 64-bit ChaCha stream id
//! is `stream`. Gaussian draws use `rand_distr::StandardNormal`.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub const STREAM_DERIVATION_VERSION: u32 = 1;

pub type StreamRng = ChaCha20Rng;

pub fn stream_rng(master_seed: u64, stream: u64) -> StreamRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Packs a two-level index into one stream id.
pub fn stream_id(group: u32, index: u32) -> u64 {
    ((group as u64) << 32) | index as u64
}
