//! Counter-based random streams.
//!
//! Every (record, entry) pair gets its own ChaCha8 stream position derived
//! from the master seed, so draws do not depend on evaluation order or on
//! how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// 32-bit words reserved per (record, entry) slot.
const WORDS_PER_SLOT_LOG2: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngContract {
    pub master_seed: u64,
}

impl RngContract {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn base(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.master_seed)
    }

    /// Stream for one record and one slot (usually the chain entry index).
    pub fn stream(&self, record: u64, slot: u64) -> ChaCha8Rng {
        positioned(&self.base(), record, slot)
    }

    /// An independent master seed, e.g. for the k-th parameter draw.
    pub fn derive(&self, index: u64) -> u64 {
        splitmix64(self.master_seed ^ splitmix64(index.wrapping_add(0x9e37_79b9_7f4a_7c15)))
    }

    pub fn derived(&self, index: u64) -> RngContract {
        RngContract::new(self.derive(index))
    }
}

/// Clone of `base` positioned at `(record, slot)`; cheaper than reseeding.
pub fn positioned(base: &ChaCha8Rng, record: u64, slot: u64) -> ChaCha8Rng {
    let mut rng = base.clone();
    rng.set_stream(record);
    rng.set_word_pos((slot as u128) << WORDS_PER_SLOT_LOG2);
    rng
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
