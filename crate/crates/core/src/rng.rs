//! Seed plumbing.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] keyed by a
//! 64-bit seed. Seeds for sub-tasks (replications, trees, folds, bootstrap
//! draws) are expanded from a root seed with a splitmix64 mix of the task
//! index, so any stream depends only on `(root, index)` and never on the
//! order in which tasks are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type GrpRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for task `index` under `root`.
#[inline]
pub fn derive_seed(root: u64, index: u64) -> u64 {
    splitmix64(splitmix64(root) ^ index.wrapping_mul(GOLDEN).wrapping_add(index))
}

pub fn rng_from_seed(seed: u64) -> GrpRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn child_rng(root: u64, index: u64) -> GrpRng {
    rng_from_seed(derive_seed(root, index))
}

/// Named sub-streams used by the test procedures.
pub(crate) mod stream {
    pub const SPLIT: u64 = 0x5e11;
    pub const CV_MAIN: u64 = 0xc0a1;
    pub const CV_AUX: u64 = 0xc0a2;
    pub const PREDICTOR: u64 = 0xf0e5;
    pub const BOOTSTRAP: u64 = 0xb007;
    pub const DESIGN: u64 = 0xde51;
    pub const RESPONSE: u64 = 0x4e59;
    pub const TEST: u64 = 0x7e57;
}
