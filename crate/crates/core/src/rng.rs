//! Named deterministic random-number substreams.
//!
//! Every randomized component of a trial draws from its own ChaCha stream
//! keyed by `(seed, component)`. Trials are keyed by `base_seed + trial index`,
//! so a single CSV row carrying its trial seed is enough to reproduce that
//! trial bit for bit, and the network draw, the protocol draws, and the query
//! draw can each be replayed in isolation. ChaCha output is platform
//! independent: equal keys give identical streams everywhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The independently seeded components of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Alive-ID sampling and node positions.
    Network,
    /// Erasure and transmission draws, consumed in round order.
    Protocol,
    /// Query-set sampling.
    Query,
}

/// Derives the deterministic stream for one component of one trial.
pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let tag: u64 = match stream {
        Stream::Network => 1,
        Stream::Protocol => 2,
        Stream::Query => 3,
    };
    let mut key = [0u8; 32];
    // splitmix spreads adjacent trial seeds across the whole key space so
    // that seed k and seed k+1 do not produce correlated ChaCha keys.
    key[0..8].copy_from_slice(&splitmix64(seed).to_le_bytes());
    key[8..16].copy_from_slice(&splitmix64(seed ^ 0x5851_f42d_4c95_7f2d).to_le_bytes());
    key[16..24].copy_from_slice(&splitmix64(tag).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// 64-bit mix finalizer (splitmix64 step).
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
