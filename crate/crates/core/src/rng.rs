//! Seed derivation for independent substreams.
//!
//! Every random quantity in the crate is drawn from a [`ChaCha8Rng`] whose
//! key is derived from the user seed and a path of indices, e.g.
//! `(seed, [tags::JUMPS, measure, layer])`. Two different index paths give
//! unrelated streams, so adding a layer or a replica never perturbs the draws
//! of the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub mod tags {
    pub const WIENER: u64 = 0x5749_454e;
    pub const JUMPS: u64 = 0x4a55_4d50;
    pub const BRIDGE: u64 = 0x4252_4944;
    pub const MARKS_MC: u64 = 0x4d41_524b;
    pub const REPLICA: u64 = 0x5245_504c;
    pub const FIELD: u64 = 0x4649_454c;
    pub const HARNESS: u64 = 0x4841_524e;
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit seed from `seed` and an index path.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut state = seed;
    let mut acc = splitmix64(&mut state);
    for &idx in path {
        state ^= idx.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        acc ^= splitmix64(&mut state);
        state = acc;
    }
    acc
}

/// Generator for the substream identified by `(seed, path)`.
pub fn substream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut state = derive_seed(seed, path);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
