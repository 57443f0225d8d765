//! Seeded random streams.
//!
//! Every consumer of randomness in a trial gets its own ChaCha stream derived
//! from the trial seed, so adding draws in one stage never shifts another.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as SimRng;

/// Named sub-streams of a trial seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Scene = 1,
    Segmentation = 2,
    Sampling = 3,
    Detector = 4,
    Tracking = 5,
}

pub fn stream(seed: u64, which: Stream) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Stream for one stage of a trial.
pub fn stage_stream(seed: u64, which: Stream, stage: usize) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed ^ (stage as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(which as u64);
    rng
}
