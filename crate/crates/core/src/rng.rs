//! Counter-based CSCG sampler.
//!
//! Entry `(row, col)` of user `k`'s channel under `seed` is a pure function of
//! `(seed, stream, row, col)`: a ChaCha20 generator keyed by `seed` is
//! positioned at stream `stream` and word offset `4 · ((row << 24) | col)`,
//! two `u64`s are drawn and mapped through Box–Muller. Because the value does
//! not depend on the matrix shape, widening `M` keeps the leading columns
//! fixed, so sweeps over `M` see nested channel realizations.

use num_complex::Complex64;
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Clone, Debug)]
pub struct CscgSampler {
    base: ChaCha20Rng,
}

impl CscgSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            base: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    /// Zero-mean unit-variance circularly symmetric complex Gaussian
    /// (real and imaginary parts each `N(0, 1/2)`).
    pub fn entry(&self, stream: u64, row: usize, col: usize) -> Complex64 {
        debug_assert!(col < 1 << 24);
        let mut rng = self.base.clone();
        rng.set_stream(stream);
        rng.set_word_pos(4 * (((row as u128) << 24) | col as u128));
        let u1 = 1.0 - unit(rng.next_u64()); // (0, 1]
        let u2 = unit(rng.next_u64());
        let r = (-u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        Complex64::new(r * theta.cos(), r * theta.sin())
    }
}

fn unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
