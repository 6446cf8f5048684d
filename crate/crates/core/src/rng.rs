//! Seeded random streams.
//!
//! Every parallel work item draws from its own ChaCha stream keyed by
//! `(seed, purpose, index)`, so results do not depend on how rayon schedules
//! the items or how many workers it has.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags separating stream families drawn from one seed.
pub mod tag {
    pub const AUDIT: u64 = 1;
    pub const LYAPUNOV: u64 = 2;
    pub const OPERATOR: u64 = 3;
    pub const OPERATOR_ERROR: u64 = 4;
    pub const SHIFTED_CHAIN: u64 = 5;
    pub const SUP_TAIL: u64 = 6;
    pub const R_SAMPLES: u64 = 7;
    pub const GOLDIE: u64 = 8;
    pub const REGENERATION: u64 = 9;
    pub const DIRECTIONS: u64 = 10;
    pub const STOPPED: u64 = 11;
    pub const DIAGNOSTICS: u64 = 12;
}

/// A factory of independent, reproducible random streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Streams {
    seed: u64,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stream `index` of family `purpose`.
    pub fn rng(&self, purpose: u64, index: u64) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(self.seed ^ splitmix(purpose)));
        rng.set_stream(index);
        rng
    }

    /// A child factory, for handing a sub-computation its own seed space.
    pub fn child(&self, purpose: u64, index: u64) -> Streams {
        Streams {
            seed: splitmix(splitmix(self.seed ^ splitmix(purpose)).wrapping_add(index)),
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
