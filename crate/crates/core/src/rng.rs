//! Reproducible random streams.
//!
//! Every random draw in the library flows from an [`RngStream`], a
//! `(seed, stream_id)` pair backed by ChaCha8. ChaCha is counter based, so a
//! stream's output depends only on the pair and never on which thread or in
//! which order it is consumed. Derived streams (`substream`) give every
//! replication, batch permutation or bootstrap draw its own generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn generator(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Stream `index` of a child family keyed by this stream.
    ///
    /// Distinct `(self, index)` pairs map to distinct child keys with
    /// overwhelming probability; the mapping is a pure function.
    pub fn substream(&self, index: u64) -> Self {
        let key = splitmix64(self.seed ^ splitmix64(self.stream_id.wrapping_add(0x9E37_79B9_7F4A_7C15)));
        Self {
            seed: key,
            stream_id: index,
        }
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over bytes. Stable across platforms and compiler versions, unlike
/// `std::hash::DefaultHasher`.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}
