//! Seeded substream derivation.
//!
//! Every randomized operation in this crate owns a `(seed, domain, index)`
//! triple: `seed` comes from the caller, `domain` tags the kind of task, and
//! `index` is the task number (trial, subject, target). Mixing all three
//! through a splitmix64 finalizer gives independent generator streams, so
//! tasks can run in any order, or in parallel, and still produce identical
//! results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags; keep values stable, they pin reproducibility.
pub mod domains {
    pub const SYNTHESIS: u64 = 1;
    pub const SCENARIO_TRIAL: u64 = 2;
    pub const ATTACK_PARAMS: u64 = 3;
    pub const ATTACK_GUESSES: u64 = 4;
    pub const LINKABILITY_TRIAL: u64 = 5;
    pub const PARAM_FILE: u64 = 6;
    pub const ACCURACY_DEV: u64 = 7;
    pub const ACCURACY_EVAL: u64 = 8;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed for `(domain, index)` under `seed`.
pub fn derive_seed(seed: u64, domain: u64, index: u64) -> u64 {
    let mut h = splitmix64(seed ^ 0xd6e8_feb8_6659_fd93);
    h = splitmix64(h ^ domain);
    splitmix64(h ^ index)
}

/// Independent generator stream for task `index` within `domain`.
pub fn substream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, domain, index))
}
