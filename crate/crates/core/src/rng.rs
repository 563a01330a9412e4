//! Seed derivation.
//!
//! Every run is driven by a base seed. Each seed index gets its own stream
//! `hash(base, index)` and each step inside that stream its own substream
//! `hash(stream, step)`, so a trace depends only on its coordinates and never
//! on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for every stochastic operation in the crate.
pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Combines two words into one well-mixed word.
pub fn hash2(a: u64, b: u64) -> u64 {
    mix64(mix64(a) ^ b.rotate_left(32) ^ 0xD6E8_FEB8_6659_FD93)
}

/// Identifies one seed's stream within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedStream {
    pub seed_index: u64,
    key: u64,
}

impl SeedStream {
    pub fn new(base_seed: u64, seed_index: u64) -> Self {
        Self {
            seed_index,
            key: hash2(base_seed, seed_index),
        }
    }

    /// Generator for one step of this stream.
    pub fn step(&self, step: u64) -> StreamRng {
        StreamRng::seed_from_u64(hash2(self.key, step))
    }

    /// Generator for a named purpose outside the step sequence (initialization,
    /// data generation). Tags never collide with step substreams because they are
    /// mixed under a different constant.
    pub fn tagged(&self, tag: u64) -> StreamRng {
        StreamRng::seed_from_u64(hash2(self.key ^ 0xA076_1D64_78BD_642F, tag))
    }
}

pub const TAG_INIT: u64 = 1;
pub const TAG_DATA: u64 = 2;
