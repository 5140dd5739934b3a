//! Seed derivation.
//!
//! Every random stream is a `ChaCha8Rng` seeded with
//! `splitmix64(root ^ fnv1a64(tag))`, so a single root seed fans out into
//! independent, named sub-streams (`"init"`, `"mask"`, `"data-order"`, ...)
//! that are reproducible across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StdRng = ChaCha8Rng;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Sub-seed for the stream named `tag`.
pub fn derive_seed(root: u64, tag: &str) -> u64 {
    splitmix64(root ^ fnv1a64(tag.as_bytes()))
}

/// Sub-seed for the `index`-th member of the stream named `tag`.
pub fn derive_indexed(root: u64, tag: &str, index: u64) -> u64 {
    splitmix64(derive_seed(root, tag) ^ splitmix64(index))
}

pub fn rng_from(seed: u64) -> StdRng {
    ChaCha8Rng::seed_from_u64(seed)
}
