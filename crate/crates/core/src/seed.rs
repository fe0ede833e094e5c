//! Seed derivation for independent random streams.
//!
//! Every micro-batch draws from its own stream keyed by
//! `(master_seed, worker, stage, micro_batch)`, so gradients do not depend on
//! the order in which the simulator evaluates workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one seed.
pub fn derive(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(GOLDEN, |acc, &w| mix(acc.wrapping_add(GOLDEN) ^ mix(w)))
}

pub fn micro_batch_seed(master: u64, worker: usize, stage: usize, index: usize) -> u64 {
    derive(&[master, worker as u64, stage as u64, index as u64])
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
