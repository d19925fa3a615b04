//! Deterministic random stream derivation.
//!
//! Every stochastic phase of a run owns a stream keyed by (seed, labels...).
//! Per-particle streams make results independent of worker scheduling: the
//! same seed produces bit-identical output whether particles are mutated
//! serially or fanned out across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use rand_chacha::ChaCha8Rng as Stream;

// Phase tags. Arbitrary distinct constants mixed into the stream key.
pub const PHASE_INIT: u64 = 0x01;
pub const PHASE_REWEIGHT: u64 = 0x02;
pub const PHASE_MUTATE: u64 = 0x03;
pub const PHASE_ENGINE: u64 = 0x04;
pub const PHASE_TUNE: u64 = 0x05;
pub const PHASE_GOLD: u64 = 0x06;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a ChaCha stream from a base seed and a label path.
pub fn substream(seed: u64, labels: &[u64]) -> ChaCha8Rng {
    let mut state = splitmix64(seed ^ 0x6a09_e667_f3bc_c908);
    for &l in labels {
        state = splitmix64(state ^ splitmix64(l));
    }
    ChaCha8Rng::seed_from_u64(state)
}

/// Stream for a (phase, iteration, particle) triple.
pub fn particle_stream(seed: u64, phase: u64, iteration: u64, particle: u64) -> ChaCha8Rng {
    substream(seed, &[phase, iteration, particle])
}
