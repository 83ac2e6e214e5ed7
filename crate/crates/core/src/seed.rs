//! Seed management.
//!
//! One master seed per run expands into independent per-component streams.
//! The splitting rule is fixed: the stream seed is
//! `splitmix64(master ^ splitmix64(fnv1a64(label) ^ index))`, and each stream
//! is a `ChaCha8Rng` seeded from that 64-bit value. Trajectory generation and
//! sampling use distinct labels, so they never share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Labels of the random streams used by the library.
pub mod labels {
    pub const INITIAL_POPULATION: &str = "initial-population";
    pub const VARIATION: &str = "nsga2-variation";
    pub const SAMPLING: &str = "reverse-diffusion";
    pub const BASELINE: &str = "random-baseline";
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Seed of stream `(label, index)` under `master`.
pub fn stream_seed(master: u64, label: &str, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(fnv1a64(label) ^ index))
}

pub fn stream(master: u64, label: &str, index: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(stream_seed(master, label, index))
}
