//! Seeded, platform-stable random streams.
//!
//! Every consumer of randomness derives its own ChaCha8 stream from the
//! experiment seed plus a list of tags (round, client id, purpose, ...).
//! ChaCha is counter based, so a stream depends only on its key and is
//! identical on every platform and independent of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags keep streams for different subsystems apart even when the
/// numeric tags coincide.
pub mod purpose {
    pub const INIT: u64 = 0x1;
    pub const PARTITION: u64 = 0x2;
    pub const CLIENT_SAMPLING: u64 = 0x3;
    pub const LOCAL_SHUFFLE: u64 = 0x4;
    pub const UNKNOWN_CACHE: u64 = 0x5;
    pub const SYNTHETIC: u64 = 0x6;
    pub const VALIDATION_SPLIT: u64 = 0x7;
    pub const GAN: u64 = 0x8;
    pub const SUBSET: u64 = 0x9;
    pub const CENTRALIZED: u64 = 0xA;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent stream from a seed and a tag path.
pub fn stream(seed: u64, tags: &[u64]) -> StreamRng {
    let mut key = [0u8; 32];
    let mut h = splitmix64(seed);
    let mut words = [0u64; 4];
    for (i, &t) in tags.iter().enumerate() {
        h = splitmix64(h ^ splitmix64(t.wrapping_add(i as u64 + 1)));
        words[i % 4] ^= h;
    }
    for (i, w) in words.iter_mut().enumerate() {
        *w ^= splitmix64(h.wrapping_add(i as u64));
    }
    for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
