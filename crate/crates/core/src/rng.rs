//! Hierarchical, reproducible random number streams.
//!
//! Every source of randomness in the crate is addressed by a path of integer
//! tags below a master seed: `root(seed).child(EXPERIMENT).child(rep).child(cell)`
//! and so on. A [`StreamId`] is a 128-bit key derived by mixing the tags; it
//! spawns an independent ChaCha8 generator on demand. Because the key depends
//! only on the path and not on draw order, replications and per-target draws
//! can be evaluated in parallel or in any order with identical results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Key of one random substream. Copyable and cheap to derive from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamId {
    hi: u64,
    lo: u64,
}

// Finalizer from splitmix64; full-avalanche 64 -> 64 bit mix.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

impl StreamId {
    /// Root stream of a run, from the master seed.
    pub fn root(seed: u64) -> Self {
        StreamId {
            hi: mix64(seed ^ 0x9e3779b97f4a7c15),
            lo: mix64(seed.wrapping_add(0x6a09e667f3bcc909)),
        }
    }

    /// Derive the substream with the given tag.
    #[inline]
    pub fn child(self, tag: u64) -> Self {
        let t = tag.wrapping_mul(0x9e3779b97f4a7c15);
        let hi = mix64(self.hi ^ t);
        let lo = mix64(self.lo ^ hi ^ t.rotate_left(32));
        StreamId { hi, lo }
    }

    /// Fresh generator positioned at the start of this stream.
    #[inline]
    pub fn rng(self) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        seed[..8].copy_from_slice(&self.hi.to_le_bytes());
        seed[8..16].copy_from_slice(&self.lo.to_le_bytes());
        seed[16..24].copy_from_slice(&mix64(self.hi ^ 0xd6e8feb8_6659fd93).to_le_bytes());
        seed[24..32].copy_from_slice(&mix64(self.lo ^ 0xa5a5a5a5_5a5a5a5a).to_le_bytes());
        ChaCha8Rng::from_seed(seed)
    }
}
