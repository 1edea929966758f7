//! Seeded 64-bit generator used by every sampling routine.
//!
//! The algorithm is SplitMix64: the state advances by the odd constant
//! `0x9E3779B97F4A7C15` and each output is the state passed through the
//! finalizer
//!
//! ```text
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! z =  z ^ (z >> 31)
//! ```
//!
//! with wrapping arithmetic. Uniform reals take the top 53 bits of one
//! output and scale by `2^-53`, giving a value in `[0, 1)`. Outputs are
//! identical on every platform for a given seed.

use rand_xoshiro::rand_core::{Rng, SeedableRng};

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    inner: rand_xoshiro::SplitMix64,
}

impl SplitMix64 {
    /// The seed is the initial state.
    pub fn new(seed: u64) -> Self {
        Self {
            inner: rand_xoshiro::SplitMix64::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Index in `0..n` by multiply-high reduction of one output.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }
}
