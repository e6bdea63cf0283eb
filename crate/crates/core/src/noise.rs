//! Counter-based Gaussian noise.
//!
//! Each observation step owns its own ChaCha8 stream (key from the seed,
//! stream id = step index), so a draw depends only on `(seed, step,
//! component)` and never on evaluation order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Source of the standard Gaussian increments used by path simulation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseSource {
    Counter { seed: u64 },
    /// Test hook: every draw is exactly zero.
    Zero,
}

impl NoiseSource {
    pub fn counter(seed: u64) -> Self {
        NoiseSource::Counter { seed }
    }

    /// Standard normal draws for components `0..n` of `step`.
    pub fn gaussians(&self, step: u64, n: usize) -> Vec<f64> {
        match *self {
            NoiseSource::Zero => vec![0.0; n],
            NoiseSource::Counter { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(step);
                (0..n).map(|_| box_muller(rng.next_u64(), rng.next_u64())).collect()
            }
        }
    }
}

/// Map two raw 64-bit words to one standard normal (cosine branch).
pub fn box_muller(a: u64, b: u64) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    // u1 in (0, 1], u2 in [0, 1)
    let u1 = ((a >> 11) as f64 + 1.0) * SCALE;
    let u2 = (b >> 11) as f64 * SCALE;
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
