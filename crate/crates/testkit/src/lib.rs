//! Seeded generators for the fixtures hostguard's tests run against: a
//! benign CMS-like tree, planted malware, tree mutations with a ledger, a
//! mixed request trace, sitemaps and nonconforming hardening inputs.
//!
//! Everything is a pure function of its seed.

pub mod hardening;
pub mod sitemap;
pub mod trace;
pub mod tree;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
