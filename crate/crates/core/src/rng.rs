//! Seed derivation.
//!
//! Every random draw comes from a ChaCha8 generator seeded with
//! `seed_from_u64(seed)` and switched to a fixed stream per purpose, so the
//! operator, the noise, the starting image and dictionary resets of one seed
//! never share random numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used throughout the crate.
pub type SolverRng = ChaCha8Rng;

/// Independent random streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Gaussian matrices and CDP masks.
    Operator = 1,
    /// Additive measurement noise.
    Noise = 2,
    /// Random starting image.
    Init = 3,
    /// Replacement draws for unused dictionary atoms.
    Dictionary = 4,
}

pub fn stream_rng(seed: u64, stream: Stream) -> SolverRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
