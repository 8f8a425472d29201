//! Counter-based random streams.
//!
//! A [`RandomStream`] names a position in a keyed ChaCha8 generator: the key is
//! derived from the master seed, the 64-bit ChaCha stream id is the stream
//! index, and the block counter starts at zero. Work item `i` of any
//! computation draws from `root.substream(i)`, so results do not depend on how
//! items are scheduled across threads.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Generator handed to samplers.
pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

// splitmix64 finalizer; a bijection on u64
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RandomStream {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed, stream_index: 0 }
    }

    /// Deterministic child stream. For a fixed parent, distinct indices map to
    /// distinct stream ids because `mix` is a bijection.
    pub fn substream(&self, index: u64) -> RandomStream {
        let parent = mix(self.stream_index.wrapping_add(0x9e37_79b9_7f4a_7c15));
        RandomStream {
            master_seed: self.master_seed,
            stream_index: parent ^ mix(index),
        }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng.set_word_pos(0);
        rng
    }

    pub fn standard_normal_draws(&self, n: usize) -> Vec<f64> {
        let mut rng = self.rng();
        standard_normals(&mut rng, n)
    }
}

pub fn standard_normals(rng: &mut StreamRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn standard_normal(rng: &mut StreamRng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn uniform(rng: &mut StreamRng) -> f64 {
    rng.random::<f64>()
}
