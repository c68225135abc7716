//! Seeded random streams.
//!
//! Every random draw in the crate goes through [`ChaCha8Rng`], whose output is
//! fixed by its specification, so a seed reproduces the same graph, data set,
//! and benchmark table on every platform.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Generator for a master seed.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent child seed from a master seed and a stream index
/// (SplitMix64 finalizer over the pair).
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(stream.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
