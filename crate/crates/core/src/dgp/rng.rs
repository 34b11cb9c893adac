//! Reproducible random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by
//! a 64-bit seed and a stream id. Replications derive their seed from
//! `(master seed, replication index)` with SplitMix64, so results do not
//! depend on the order in which parallel workers run. ChaCha's stream id
//! separates independent purposes (sampling, fold shuffling, propensity
//! noise, bootstrap) under one seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Sample = 1,
    Folds = 2,
    Propensity = 3,
    Bootstrap = 4,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replication `rep` under `master`.
pub fn replication_seed(master: u64, rep: u64) -> u64 {
    splitmix64(splitmix64(master) ^ rep.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

/// A standard normal draw that is a deterministic function of `(seed, key)`.
/// Distinct keys give independent draws.
pub fn keyed_standard_normal(seed: u64, key: &[f64]) -> f64 {
    let mut h = splitmix64(seed);
    for v in key {
        h = splitmix64(h ^ v.to_bits());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(h);
    rng.set_stream(Stream::Propensity as u64);
    StandardNormal.sample(&mut rng)
}
