//! Seeded, splittable randomness.
//!
//! A SplitMix64 generator with named sub-streams: data generation, parameter
//! initialization, dropout and shuffling each derive an independent stream
//! from one master seed, so changing how one consumer draws does not perturb
//! the others. Identical seeds give identical draw sequences.

use crate::error::{Error, Result};
use crate::math::{Matrix, Scalar};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic seeded generator (SplitMix64 core, Box-Muller normals).
#[derive(Debug, Clone)]
pub struct SeededRng {
    state: u64,
    spare_normal: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            state: seed,
            spare_normal: None,
        }
    }

    /// Derive an independent named stream from this generator's seed.
    ///
    /// The derivation hashes the name into the seed; it does not consume
    /// draws from `self`, so streams can be created in any order.
    pub fn stream(&self, name: &str) -> SeededRng {
        let mut h = self.state;
        for &b in name.as_bytes() {
            h = mix64(h ^ u64::from(b)).wrapping_add(GOLDEN_GAMMA);
        }
        SeededRng::new(mix64(h))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.uniform() * n as f64) as usize % n
    }

    /// Standard normal draw (Box-Muller, cached spare).
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // u1 in (0, 1] so the log is finite
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> Result<f64> {
        if std < 0.0 {
            return Err(Error::InvalidArgument("negative std".into()));
        }
        Ok(mean + std * self.standard_normal())
    }

    /// Matrix of i.i.d. `N(mean, std^2)` draws.
    pub fn normal_matrix<T: Scalar>(
        &mut self,
        rows: usize,
        cols: usize,
        mean: f64,
        std: f64,
    ) -> Result<Matrix<T>> {
        if std < 0.0 {
            return Err(Error::InvalidArgument("negative std".into()));
        }
        let mut m = Matrix::zeros(rows, cols);
        for v in m.data_mut() {
            *v = T::from_f64(mean + std * self.standard_normal());
        }
        Ok(m)
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        for i in (1..slice.len()).rev() {
            let j = self.below(i + 1);
            slice.swap(i, j);
        }
    }
}
