//! Seed derivation and the generator used for every stochastic choice.
//!
//! All randomness flows through [`ChaCha8Rng`], a counter-based stream
//! generator. Per-run streams are derived by hashing the master seed with
//! the identifiers of the run, so runs can execute in any order.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `master` with an ordered list of identifiers into a new seed.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn run_seed(master: u64, prompt_id: u64, run_id: u64) -> u64 {
    derive_seed(master, &[prompt_id, run_id])
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
