//! Seeded random streams. Every stochastic component draws from its own
//! ChaCha stream so swapping one policy never perturbs another's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream identifiers, one per consumer.
pub mod stream {
    pub const CAMERA_TRACE: u64 = 1;
    pub const SERVER_TRACE: u64 = 2;
    pub const CAMERA_POLICY: u64 = 3;
    pub const SERVER_POLICY: u64 = 4;
}

pub fn seeded(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer, used to derive per-cell seeds for noise that must be
/// a pure function of its coordinates.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn cell_rng(seed: u64, a: u64, b: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(mix64(mix64(seed ^ mix64(a)) ^ b))
}
