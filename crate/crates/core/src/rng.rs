//! Seed derivation and stream splitting.
//!
//! Every random draw in the crate comes from a [`ChaCha20Rng`] whose 256-bit
//! key is derived from a 64-bit root seed and a path of 64-bit tags:
//!
//! ```text
//! state_0 = splitmix64(root)
//! state_k = splitmix64(state_{k-1} ^ tag_k)
//! key     = splitmix64 outputs seeded from state_n, four words, little endian
//! ```
//!
//! Streams for different tag paths are independent for practical purposes,
//! and a stream never depends on how many values another stream consumed.
//! ChaCha is counter based and its output is identical on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Tags used by the SEM generator and the experiment runner.
pub mod tags {
    pub const WEIGHTS: u64 = 0x5745_4947_4854_5300;
    pub const ENV: u64 = 0x454e_5600;
    pub const HIDDEN: u64 = 1;
    pub const X1_NOISE: u64 = 2;
    pub const Y_NOISE: u64 = 3;
    pub const X2_NOISE: u64 = 4;
    pub const REPLICATE: u64 = 0x5245_504c_0000;
    pub const TRAIN: u64 = 0x5452_4149_4e00;
    pub const TEST: u64 = 0x5445_5354_0000;
    pub const SPLIT: u64 = 0x5350_4c49_5400;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash a root seed and a tag path into a new 64-bit seed.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    let mut state = root;
    let mut out = splitmix64(&mut state);
    for &tag in path {
        let mut s = out ^ tag;
        out = splitmix64(&mut s);
    }
    out
}

/// A ChaCha20 stream for `root` and `path`.
pub fn stream(root: u64, path: &[u64]) -> ChaCha20Rng {
    let mut state = derive_seed(root, path);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha20Rng::from_seed(key)
}
