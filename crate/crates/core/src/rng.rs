//! Seeded randomness and deterministic seed derivation.
//!
//! Every random draw in the pipeline comes from a [`ChaCha8Rng`] rooted at
//! the run's single seed. Sub-tasks (per-bundle subsampling, splits,
//! baselines) use [`derive_seed`] so their draws do not depend on iteration
//! order elsewhere.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Build the deterministic generator for a seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent seed for a named sub-task.
pub fn derive_seed(seed: u64, tag: &str, index: u64) -> u64 {
    let mut h = fnv1a64(&seed.to_le_bytes());
    h = fnv1a64_continue(h, tag.as_bytes());
    fnv1a64_continue(h, &index.to_le_bytes())
}

/// FNV-1a over a byte slice; used for seed mixing and vocabulary hashing.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    fnv1a64_continue(0xcbf2_9ce4_8422_2325, bytes)
}

pub fn fnv1a64_continue(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
