//! Reproducible random streams.
//!
//! A stream is a `(seed, stream)` pair backed by ChaCha8. The 64-bit seed is
//! expanded to the 256-bit ChaCha key with SplitMix64 and the stream id selects
//! ChaCha's independent 64-bit stream, so streams sharing a seed never overlap.
//! Child streams are derived by hashing the parent stream id with an index,
//! which lets replicates and chains be scheduled in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngStream { seed, stream }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut state = self.seed;
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream);
        rng
    }

    /// Child stream `index` of this stream.
    pub fn derive(&self, index: u64) -> RngStream {
        let mut state = self.stream ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
        RngStream {
            seed: self.seed,
            stream: splitmix64(&mut state) ^ index,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
