//! Deterministic RNG streams.
//!
//! Every random decision in the simulator draws from a stream derived from
//! the run seed plus a handful of context words (round, client id, purpose
//! tag). Streams are independent of execution order, which is what makes
//! parallel client training byte-for-byte reproducible: each client mixes
//! its own stream regardless of which thread runs it.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream type used throughout; a cryptographic generator is overkill but
/// its output is stable across platforms and crate versions.
pub type SeedStream = ChaCha8Rng;

/// Purpose tags keeping unrelated streams disjoint even when the other
/// context words collide.
pub mod channel {
    pub const PARTITION: u64 = 0xA1;
    pub const MODEL_INIT: u64 = 0xA2;
    pub const LOCAL_TRAIN: u64 = 0xA3;
    pub const SELECT: u64 = 0xA4;
    pub const AGENT_INIT: u64 = 0xA5;
    pub const REPLAY: u64 = 0xA6;
    pub const EVAL: u64 = 0xA7;
    pub const SYNTH: u64 = 0xA8;
    pub const CLUSTER: u64 = 0xA9;
}

/// Folds context words into a single 64-bit seed with a splitmix64 round
/// per word. Not cryptographic; the only requirement is that distinct
/// word sequences land far apart.
pub fn mix(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

/// Builds the stream identified by the given context words.
pub fn stream(parts: &[u64]) -> SeedStream {
    ChaCha8Rng::seed_from_u64(mix(parts))
}
