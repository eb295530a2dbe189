//! Splittable seeding.
//!
//! Every random stream is a ChaCha8 generator keyed by
//! `master seed || stream tag || chunk index || 0`, each packed as little-endian
//! `u64`. Streams never overlap and any chunk can be regenerated in isolation, so
//! chunked work can run in any order and still reproduce bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Changing a value changes every output that depends on it.
pub mod tag {
    pub const BASEBAND: u64 = 0x6261_7365_6261_6e64; // "baseband"
    pub const RF_IN_PHASE: u64 = 0x7266_2d69_7068_0000;
    pub const RF_QUADRATURE: u64 = 0x7266_2d71_7561_0000;
    pub const RF_FLOOR: u64 = 0x7266_2d66_6c6f_6f72;
    pub const CALIBRATION: u64 = 0x6361_6c69_6272_6174;
    pub const REPEAT: u64 = 0x7265_7065_6174_0000;
}

/// Generator for chunk `chunk` of stream `tag` under `master`.
pub fn stream_rng(master: u64, tag: u64, chunk: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master.to_le_bytes());
    key[8..16].copy_from_slice(&tag.to_le_bytes());
    key[16..24].copy_from_slice(&chunk.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Derives a fresh master seed, e.g. for the calibration run or repeat `index`.
pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    use rand::RngCore;
    stream_rng(master, tag, index).next_u64()
}
