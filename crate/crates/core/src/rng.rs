//! Seed-derived random streams.
//!
//! Every consumer of randomness gets its own stream keyed by
//! `(master seed, lane, generation)`, so results never depend on the order in
//! which workers are scheduled.

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type StreamRng = ChaCha8Rng;

/// Lane reserved for population initialization.
pub const LANE_INIT: u64 = u64::MAX;
/// Lane reserved for the selection–mutation jump.
pub const LANE_JUMP: u64 = u64::MAX - 1;
/// Lane reserved for subsampling in distance computations.
pub const LANE_SUBSAMPLE: u64 = u64::MAX - 2;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash of `(seed, lane, generation)` used as the stream seed.
pub fn stream_key(seed: u64, lane: u64, generation: u64) -> u64 {
    splitmix64(seed ^ splitmix64(lane ^ splitmix64(generation.wrapping_add(0x5851_F42D))))
}

/// Independent stream for `lane` (usually an agent id) at `generation`.
pub fn stream(seed: u64, lane: u64, generation: u64) -> StreamRng {
    StreamRng::seed_from_u64(stream_key(seed, lane, generation))
}

/// Standard normal draw.
#[inline]
pub fn normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}
