//! Seeded random sources. Every stochastic step in the crate draws from a
//! [`SeededRng`], so identical seeds give bitwise-identical runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent stream for a named purpose (data, init, dropout...).
pub fn derived(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw on `[-a, a)`.
pub fn symmetric_uniform(rng: &mut SeededRng, a: f64) -> f64 {
    (rng.random::<f64>() * 2.0 - 1.0) * a
}
