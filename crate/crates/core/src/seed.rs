//! Deterministic seed derivation so that parallel work reproduces serial work.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep the generators of different consumers apart.
pub mod stream {
    pub const DESIGN: u64 = 0x6465_7369_676e;
    pub const TREATMENT: u64 = 0x74_7265_6174;
    pub const RESPONSE: u64 = 0x7265_7370;
    pub const SAMPLER: u64 = 0x6d63_6d63;
    pub const CHAIN: u64 = 0x63_6861_696e;
    pub const RESTART: u64 = 0x72_6573_7461_7274;
}

#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Child seed for `(master, index, tag)`.
pub fn derive_seed(master: u64, index: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ tag) ^ index)
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
