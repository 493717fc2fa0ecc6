//! Hierarchical seed derivation.
//!
//! One root seed fans out into independent streams keyed by a path of
//! integers (episode index, fixation index, purpose tag, ...). Streams are
//! addressed, not consumed in order, so results do not depend on how work is
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Default root seed when neither the CLI nor the config supplies one.
pub const DEFAULT_SEED: u64 = 0x5EED;

/// Stream purpose tags.
pub mod tag {
    pub const TARGET: u64 = 1;
    pub const FIXATION: u64 = 2;
    pub const POLICY: u64 = 3;
    pub const MC_TARGET: u64 = 4;
    pub const TRAIN_EPISODE: u64 = 5;
    pub const HOLDOUT_EPISODE: u64 = 6;
    pub const INIT: u64 = 7;
    pub const SHUFFLE: u64 = 8;
    pub const ORACLE: u64 = 9;
    pub const BATTERY: u64 = 10;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A node in the seed tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedPath(u64);

impl SeedPath {
    pub fn root(seed: u64) -> Self {
        SeedPath(splitmix64(seed))
    }

    pub fn child(self, key: u64) -> Self {
        SeedPath(splitmix64(
            self.0 ^ splitmix64(key.wrapping_add(0x632B_E59B_D9B4_E019)),
        ))
    }

    pub fn child2(self, a: u64, b: u64) -> Self {
        self.child(a).child(b)
    }

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn rng(self) -> StreamRng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}
