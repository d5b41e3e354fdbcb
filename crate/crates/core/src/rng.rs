//! Hierarchical random streams.
//!
//! Every random draw in the crate comes from a stream addressed by a path of
//! indices below a master seed. A child key is a pure function of its parent
//! key and index, so work can be split across threads in any way without
//! changing a single draw.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type StreamRng = Xoshiro256PlusPlus;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    seed: u64,
    hi: u64,
    lo: u64,
}

// SplitMix64 finalizer.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

impl StreamKey {
    pub fn master(seed: u64) -> Self {
        StreamKey {
            seed,
            hi: mix(seed ^ 0x5851_f42d_4c95_7f2d),
            lo: mix(seed.wrapping_add(GOLDEN)),
        }
    }

    /// The seed this key descends from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn child(&self, index: u64) -> Self {
        let a = mix(self.hi ^ mix(index.wrapping_mul(GOLDEN).wrapping_add(self.lo)));
        let b = mix(self.lo.wrapping_add(a) ^ index.rotate_left(17));
        StreamKey {
            seed: self.seed,
            hi: a,
            lo: b,
        }
    }

    pub fn descend(&self, indices: &[u64]) -> Self {
        indices.iter().fold(*self, |k, &i| k.child(i))
    }

    #[inline]
    pub fn rng(&self) -> StreamRng {
        let mut s = [0u8; 32];
        // hi and lo are already finalizer outputs
        let words = [
            self.hi,
            self.lo,
            mix(self.hi ^ self.lo.rotate_left(32)),
            self.lo.wrapping_sub(self.hi) ^ GOLDEN,
        ];
        for (chunk, w) in s.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        // xoshiro must not start from the all-zero state
        if words.iter().all(|&w| w == 0) {
            s[0] = 1;
        }
        Xoshiro256PlusPlus::from_seed(s)
    }
}
