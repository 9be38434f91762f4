//! Seeded generator for a sparse single-input NARX system
//!
//! ```text
//! y[k+1] = 0.5 y[k] + 0.2 u[k] + e[k],   u[k] ~ N(0, 1),  e[k] ~ N(0, σ²)
//! ```
//!
//! Only two of the fifteen degree-2 terms over `[y_k, y_{k-1}, y_{k-2}, u_k]`
//! carry signal, which makes it a ground truth for relevance pruning.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::dictionary::NarxConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseNarx {
    pub output_coeff: f64,
    pub input_coeff: f64,
    pub noise_std: f64,
}

impl Default for SparseNarx {
    fn default() -> Self {
        Self { output_coeff: 0.5, input_coeff: 0.2, noise_std: 0.01 }
    }
}

/// One simulated record, channel-major like the dictionary expects.
#[derive(Debug, Clone)]
pub struct Record {
    pub y: Vec<f64>,
    pub u: Vec<f64>,
}

impl SparseNarx {
    /// Names of the truly active terms in the default dictionary.
    pub const ACTIVE_TERMS: [&'static str; 2] = ["y[k]", "u1[k]"];

    /// Regressor layout matching the generator: three output lags, current input.
    pub fn config() -> NarxConfig {
        NarxConfig::miso(1)
    }

    /// Simulates `len` samples after a burn-in of 50 steps.
    pub fn simulate<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Record {
        let noise = Normal::new(0.0, self.noise_std.max(0.0)).expect("finite noise level");
        let burn_in = 50;
        let mut y = 0.0;
        let mut ys = Vec::with_capacity(len);
        let mut us = Vec::with_capacity(len);
        for k in 0..burn_in + len {
            let u: f64 = StandardNormal.sample(rng);
            if k >= burn_in {
                ys.push(y);
                us.push(u);
            }
            y = self.output_coeff * y + self.input_coeff * u + noise.sample(rng);
        }
        Record { y: ys, u: us }
    }
}
