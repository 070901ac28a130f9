//! Seed derivation for independent substreams.
//!
//! Every random draw in the crate comes from a `ChaCha8Rng` keyed by a
//! 64-bit base seed plus a path of indices (stream tag, replication, firm,
//! ...). Keys are mixed with SplitMix64 so neighbouring indices give
//! unrelated streams and results never depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const FACTOR_STREAM: u64 = 1;
pub const FIRM_STREAM: u64 = 2;
pub const PATH_STREAM: u64 = 3;
pub const REPLICATION_STREAM: u64 = 4;
pub const RESTART_STREAM: u64 = 5;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix(base), |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn stream(base: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, path))
}
