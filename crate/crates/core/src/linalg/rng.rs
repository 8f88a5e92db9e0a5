//! Counter-based SplitMix64 generator.
//!
//! Output `n` is `mix(seed + (n + 1) * 0x9E3779B97F4A7C15)` where `mix` is the
//! SplitMix64 finalizer, so any position in the stream can be computed
//! directly and streams derived with [`RngState::split`] are independent of
//! how far the parent has advanced. Normal variates use the Box–Muller
//! transform evaluated through `libm`, which keeps draws bit-identical across
//! platforms.

use alloc::vec::Vec;

use super::Matrix;
use crate::error::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    seed: u64,
    counter: u64,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState { seed, counter: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Child stream keyed by `stream`; does not advance `self`.
    pub fn split(&self, stream: u64) -> RngState {
        RngState::new(mix64(self.seed ^ mix64(stream.wrapping_add(GOLDEN_GAMMA))))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.seed.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn next_range(&mut self, lo: usize, hi: usize) -> usize {
        debug_assert!(lo <= hi);
        let span = (hi - lo + 1) as u64;
        lo + (self.next_u64() % span) as usize
    }

    /// Uniform in `[lo, hi)`.
    pub fn next_uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal draws, two per Box–Muller pair.
    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        let mut chunks = out.chunks_mut(2);
        for chunk in &mut chunks {
            // 1 - U lies in (0, 1], keeping the log finite.
            let u1 = 1.0 - self.next_f64();
            let u2 = self.next_f64();
            let r = libm::sqrt(-2.0 * libm::log(u1));
            let theta = 2.0 * core::f64::consts::PI * u2;
            chunk[0] = r * libm::cos(theta);
            if let Some(second) = chunk.get_mut(1) {
                *second = r * libm::sin(theta);
            }
        }
    }
}

/// `rows x cols` i.i.d. normal draws with the given mean and standard
/// deviation, advancing `rng`.
pub fn seeded_gaussian(
    rng: &mut RngState,
    rows: usize,
    cols: usize,
    mean: f64,
    std: f64,
) -> Result<Matrix> {
    if !(std >= 0.0) || !std.is_finite() || !mean.is_finite() {
        return Err(Error::invalid("seeded_gaussian: std must be finite and non-negative"));
    }
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("seeded_gaussian: dimensions must be positive"));
    }
    let mut values: Vec<f64> = alloc::vec![0.0; rows * cols];
    rng.fill_standard_normal(&mut values);
    for v in values.iter_mut() {
        *v = mean + std * *v;
    }
    Ok(Matrix::from_parts(rows, cols, values))
}
