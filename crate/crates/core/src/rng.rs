//! Seed derivation for reproducible, parallel Monte Carlo.
//!
//! Every replication draws from its own ChaCha stream whose seed is a
//! SplitMix64 mix of the root seed and the replication's coordinates, so a
//! replication's data never depends on scheduling or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StudyRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable child seed of `root` at the given path of indices.
pub fn child_seed(root: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(root), |acc, &i| splitmix64(acc ^ splitmix64(i.wrapping_add(GOLDEN_GAMMA))))
}

pub fn rng_from_seed(seed: u64) -> StudyRng {
    ChaCha8Rng::seed_from_u64(seed)
}
