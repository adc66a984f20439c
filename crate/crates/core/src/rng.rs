//! Seed derivation.
//!
//! Every random stream in the pipeline comes from one master seed through a
//! path of named steps (`fold`, `class`, `gmm`, ...), so any sub-computation
//! can be replayed in isolation and parallel execution matches serial
//! execution bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

/// A position in the seed derivation tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Seed(u64);

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl Seed {
    pub const fn new(master: u64) -> Self {
        Seed(master)
    }

    pub fn value(self) -> u64 {
        self.0
    }

    /// Named child stream.
    pub fn child(self, tag: &str) -> Seed {
        Seed(splitmix64(self.0 ^ splitmix64(fnv1a(tag))))
    }

    /// Indexed child stream (fold number, class label, row index).
    pub fn index(self, i: u64) -> Seed {
        Seed(splitmix64(splitmix64(self.0).wrapping_add(i)))
    }

    pub fn rng(self) -> SeededRng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

impl From<u64> for Seed {
    fn from(v: u64) -> Self {
        Seed(v)
    }
}
