//! Seeding of the Monte-Carlo generators.
//!
//! Every stochastic routine takes a [`Seed`] and builds its own
//! [`ChaCha8Rng`] from it. Sub-tasks (per stage, per block of events, per
//! shard) get child seeds through [`Seed::derive`], so the output never
//! depends on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed {
    pub value: u64,
    #[serde(default)]
    pub shard_index: u64,
}

impl Seed {
    pub const fn new(value: u64) -> Self {
        Seed {
            value,
            shard_index: 0,
        }
    }

    pub const fn with_shard(self, shard_index: u64) -> Self {
        Seed {
            value: self.value,
            shard_index,
        }
    }

    /// Child seed for an independent sub-task identified by `tag`.
    ///
    /// The shard index is kept, so derived generators of different shards
    /// stay on different ChaCha streams.
    pub fn derive(self, tag: u64) -> Self {
        let mixed = splitmix64(self.value ^ splitmix64(tag.wrapping_add(0x5851_f42d_4c95_7f2d)));
        Seed {
            value: mixed,
            shard_index: self.shard_index,
        }
    }

    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.value);
        rng.set_stream(self.shard_index);
        rng
    }
}

impl From<u64> for Seed {
    fn from(value: u64) -> Self {
        Seed::new(value)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
