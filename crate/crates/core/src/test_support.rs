//! Random fixtures for unit tests.

use crate::numerics::{hermitian_part, ComplexMatrix};
use crate::rng::CscgSampler;

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> ComplexMatrix {
    let s = CscgSampler::new(seed);
    ComplexMatrix::from_fn(rows, cols, |i, j| s.entry(u64::MAX, i, j))
}

/// `X X^H` with `X` of size `n × rank`.
pub fn random_psd(n: usize, rank: usize, seed: u64) -> ComplexMatrix {
    let x = random_matrix(n, rank, seed);
    hermitian_part(&(&x * x.adjoint()))
}
