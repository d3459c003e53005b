//! Seeded generators. Every random stream in the crate is a `ChaCha20Rng`
//! seeded through `seed_from_u64`, so runs replay across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Identifier written into run metadata.
pub const RNG_ID: &str = "chacha20 (rand_chacha 0.9, seed_from_u64)";

pub fn rng_from(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Child seed for a named sub-stream: one splitmix64 round over `seed ^ hash(tag)`.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let h = tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    let mut z = (seed ^ h).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
