//! Deterministic simulator of a multi-domain software-defined network with
//! partial controller synchronization, a family of synchronization policies
//! (value-based, policy-gradient and static baselines), and an experiment
//! harness producing CSV/JSON artifacts.

pub mod agents;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod routing;
pub mod topology;

pub use error::{Error, Result};

/// The one random source used everywhere. Seeded, portable, reproducible.
pub type SimRng = rand_chacha::ChaCha12Rng;

/// Splitmix64 step, used to derive independent sub-seeds from one master seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
