//! Dense complex linear-algebra kernels shared by every solver.
//!
//! Matrices are `nalgebra` dense matrices of `Complex64`. Decompositions are
//! delegated to `nalgebra`; this module adds rank truncation, descending
//! ordering, Hermitian symmetrization and the PSD helpers the precoder
//! formulas need.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

#[allow(non_camel_case_types)]
pub type c64 = Complex64;

/// Dense complex matrix used for every channel, basis and covariance.
pub type ComplexMatrix = DMatrix<c64>;

const SVD_MAX_ITER: usize = 10_000;
const EIG_MAX_ITER: usize = 10_000;

/// Builds a matrix from row-major entries, rejecting empty shapes and
/// non-finite values.
pub fn from_row_major(rows: usize, cols: usize, entries: &[c64]) -> Result<ComplexMatrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::Contract(format!("empty matrix shape {rows}x{cols}")));
    }
    if entries.len() != rows * cols {
        return Err(Error::Contract(format!(
            "{} entries supplied for a {rows}x{cols} matrix",
            entries.len()
        )));
    }
    if !entries.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::Contract("matrix contains NaN or Inf".into()));
    }
    Ok(ComplexMatrix::from_row_slice(rows, cols, entries))
}

pub fn is_finite(m: &ComplexMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Real diagonal matrix promoted to complex.
pub fn real_diag(values: &[f64]) -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&DVector::from_iterator(
        values.len(),
        values.iter().map(|&x| c64::new(x, 0.0)),
    ))
}

pub fn frobenius(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `(m + m^H) / 2`.
pub fn hermitian_part(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Hermitian check relative to `max(1, ‖m‖_F)`.
pub fn is_hermitian(m: &ComplexMatrix, tol: f64) -> bool {
    m.is_square() && frobenius(&(m - m.adjoint())) <= tol * frobenius(m).max(1.0)
}

/// Rank-truncated SVD `m ≈ U · diag(σ) · V^H`.
#[derive(Clone, Debug)]
pub struct ReducedSvd {
    /// `rows × r`, orthonormal columns.
    pub u: ComplexMatrix,
    /// Descending, all strictly above the rank tolerance.
    pub singular_values: Vec<f64>,
    /// `cols × r`, orthonormal columns.
    pub v: ComplexMatrix,
}

impl ReducedSvd {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        &self.u * real_diag(&self.singular_values) * self.v.adjoint()
    }
}

/// Default rank threshold: `1e-10 · max(rows, cols) · σ_max`.
pub fn default_rank_tol(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    1e-10 * rows.max(cols) as f64 * sigma_max
}

/// Reduced SVD keeping only singular triplets above `rank_tol`
/// (or [`default_rank_tol`] when `None`).
pub fn reduced_svd(m: &ComplexMatrix, rank_tol: Option<f64>) -> Result<ReducedSvd> {
    let (rows, cols) = m.shape();
    let failure = |what| Error::NumericFailure { rows, cols, what };
    if !is_finite(m) {
        return Err(failure("non-finite input to SVD"));
    }
    let svd = m
        .clone()
        .try_svd(true, true, f64::EPSILON, SVD_MAX_ITER)
        .ok_or_else(|| failure("SVD iteration did not converge"))?;
    let u = svd
        .u
        .ok_or_else(|| failure("SVD returned no left vectors"))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| failure("SVD returned no right vectors"))?;

    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma_max = order.first().map_or(0.0, |&i| svd.singular_values[i]);
    let tol = rank_tol.unwrap_or_else(|| default_rank_tol(rows, cols, sigma_max));
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| svd.singular_values[i] > tol)
        .collect();

    let r = kept.len();
    let mut out_u = ComplexMatrix::zeros(rows, r);
    let mut out_v = ComplexMatrix::zeros(cols, r);
    let mut sigma = Vec::with_capacity(r);
    for (j, &i) in kept.iter().enumerate() {
        out_u.set_column(j, &u.column(i));
        out_v.set_column(j, &v_t.row(i).adjoint());
        sigma.push(svd.singular_values[i]);
    }
    Ok(ReducedSvd {
        u: out_u,
        singular_values: sigma,
        v: out_v,
    })
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues descending.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Column `i` is the unit eigenvector for `values[i]`.
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    /// `V · diag(f(λ)) · V^H`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let mapped: Vec<f64> = self.values.iter().map(|&x| f(x)).collect();
        &self.vectors * real_diag(&mapped) * self.vectors.adjoint()
    }
}

/// Eigendecomposition of the Hermitian part of `m`.
pub fn hermitian_eigen(m: &ComplexMatrix) -> Result<HermitianEigen> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(Error::Contract(format!(
            "eigendecomposition of non-square {rows}x{cols} matrix"
        )));
    }
    let h = hermitian_part(m);
    let eig = nalgebra::SymmetricEigen::try_new(h, f64::EPSILON, EIG_MAX_ITER).ok_or(
        Error::NumericFailure {
            rows,
            cols,
            what: "Hermitian eigensolver did not converge",
        },
    )?;
    let mut order: Vec<usize> = (0..rows).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut vectors = ComplexMatrix::zeros(rows, rows);
    let mut values = Vec::with_capacity(rows);
    for (j, &i) in order.iter().enumerate() {
        vectors.set_column(j, &eig.eigenvectors.column(i));
        values.push(eig.eigenvalues[i]);
    }
    Ok(HermitianEigen { values, vectors })
}

fn require_psd_input(m: &ComplexMatrix, what: &str) -> Result<HermitianEigen> {
    if !is_hermitian(m, 1e-10) {
        return Err(Error::Contract(format!("{what}: input is not Hermitian")));
    }
    let eig = hermitian_eigen(m)?;
    let scale = eig.values.first().copied().unwrap_or(0.0).abs().max(1.0);
    if eig.values.iter().any(|&x| x < -1e-10 * scale) {
        return Err(Error::Contract(format!("{what}: input is not PSD")));
    }
    Ok(eig)
}

/// Inverse square root of a Hermitian PSD matrix, eigenvalues clamped at
/// `jitter`. Fails with [`Error::Singular`] when no eigenvalue reaches the
/// clamp (or when a zero eigenvalue meets a zero jitter).
pub fn psd_inv_sqrt(m: &ComplexMatrix, jitter: f64) -> Result<ComplexMatrix> {
    let eig = require_psd_input(m, "psd_inv_sqrt")?;
    let top = eig.values.first().copied().unwrap_or(0.0);
    if top < jitter || eig.values.iter().any(|&x| x.max(jitter) <= 0.0) {
        return Err(Error::Singular { jitter });
    }
    Ok(eig.map(|x| 1.0 / x.max(jitter).sqrt()))
}

/// Square root of a Hermitian PSD matrix (negative rounding noise clamped to 0).
pub fn psd_sqrt(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let eig = require_psd_input(m, "psd_sqrt")?;
    Ok(eig.map(|x| x.max(0.0).sqrt()))
}

/// Natural `log|I + x|` for Hermitian PSD `x` (eigenvalues down to `-1e-9`
/// tolerated), via Cholesky.
pub fn logdet_identity_plus(x: &ComplexMatrix) -> Result<f64> {
    if !is_hermitian(x, 1e-10) {
        return Err(Error::Contract(
            "logdet_identity_plus: input is not Hermitian".into(),
        ));
    }
    let n = x.nrows();
    let h = hermitian_part(x);
    if hermitian_eigen(&h)?
        .values
        .last()
        .is_some_and(|&v| v < -1e-9)
    {
        return Err(Error::Contract(
            "logdet_identity_plus: input has an eigenvalue below -1e-9".into(),
        ));
    }
    let chol = nalgebra::Cholesky::new(h + ComplexMatrix::identity(n, n)).ok_or(
        Error::NumericFailure {
            rows: n,
            cols: n,
            what: "Cholesky of I + x failed",
        },
    )?;
    let l = chol.l_dirty();
    Ok((0..n)
        .map(|i| 2.0 * l[(i, i)].re.ln())
        .sum::<f64>()
        .max(0.0))
}

/// Moore–Penrose pseudo-inverse via the reduced SVD.
pub fn pinv(m: &ComplexMatrix, rank_tol: Option<f64>) -> Result<ComplexMatrix> {
    let svd = reduced_svd(m, rank_tol)?;
    let inv: Vec<f64> = svd.singular_values.iter().map(|s| 1.0 / s).collect();
    Ok(&svd.v * real_diag(&inv) * svd.u.adjoint())
}

/// Orthonormal basis of the orthogonal complement of the column span of `v`
/// (which must have orthonormal columns) in `C^dim`.
pub fn orthogonal_complement(v: &ComplexMatrix, dim: usize) -> Result<ComplexMatrix> {
    let projector = ComplexMatrix::identity(dim, dim) - v * v.adjoint();
    let eig = hermitian_eigen(&projector)?;
    let keep: Vec<usize> = (0..dim).filter(|&i| eig.values[i] > 0.5).collect();
    let mut out = ComplexMatrix::zeros(dim, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        out.set_column(j, &eig.vectors.column(i));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::{random_matrix, random_psd};

    fn identity(n: usize) -> ComplexMatrix {
        ComplexMatrix::identity(n, n)
    }

    #[test]
    fn svd_of_identity() {
        let svd = reduced_svd(&identity(3), None).unwrap();
        assert_eq!(svd.singular_values, vec![1.0, 1.0, 1.0]);
        assert!(frobenius(&(svd.reconstruct() - identity(3))) < 1e-14);
        assert!(frobenius(&(svd.u.adjoint() * &svd.u - identity(3))) < 1e-14);
    }

    #[test]
    fn svd_drops_zero_singular_value() {
        let m = real_diag(&[3.0, 0.0]);
        let svd = reduced_svd(&m, None).unwrap();
        assert_eq!(svd.rank(), 1);
        assert!((svd.singular_values[0] - 3.0).abs() < 1e-15);
        // Column sign/phase is free; compare the rank-one projectors.
        let pu = &svd.u * svd.u.adjoint();
        let pv = &svd.v * svd.v.adjoint();
        let e1 = real_diag(&[1.0, 0.0]);
        assert!(frobenius(&(pu - &e1)) < 1e-14);
        assert!(frobenius(&(pv - &e1)) < 1e-14);
    }

    #[test]
    fn svd_reconstructs_random_wide_matrix() {
        let m = random_matrix(4, 6, 11);
        let svd = reduced_svd(&m, None).unwrap();
        assert_eq!(svd.rank(), 4);
        let rel = frobenius(&(svd.reconstruct() - &m)) / frobenius(&m);
        assert!(rel < 1e-9, "relative error {rel}");
        assert!(frobenius(&(svd.u.adjoint() * &svd.u - identity(4))) < 1e-10);
        assert!(frobenius(&(svd.v.adjoint() * &svd.v - identity(4))) < 1e-10);
        assert!(svd.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn svd_rejects_non_finite() {
        let mut m = identity(2);
        m[(0, 1)] = c64::new(f64::NAN, 0.0);
        assert!(matches!(
            reduced_svd(&m, None),
            Err(Error::NumericFailure {
                rows: 2,
                cols: 2,
                ..
            })
        ));
    }

    #[test]
    fn inv_sqrt_identity_and_diagonal() {
        let r = psd_inv_sqrt(&identity(2), 0.0).unwrap();
        assert!(frobenius(&(r - identity(2))) < 1e-14);
        let r = psd_inv_sqrt(&real_diag(&[4.0, 9.0]), 0.0).unwrap();
        assert!(frobenius(&(r - real_diag(&[0.5, 1.0 / 3.0]))) < 1e-14);
    }

    #[test]
    fn inv_sqrt_of_random_psd_whitens() {
        let m = random_psd(5, 5, 3);
        let r = psd_inv_sqrt(&m, 1e-14).unwrap();
        assert!(frobenius(&(&r * &m * &r - identity(5))) < 1e-8);
        assert!(frobenius(&(&r * &m - &m * &r)) < 1e-8);
    }

    #[test]
    fn inv_sqrt_error_paths() {
        let mut skew = identity(2);
        skew[(0, 1)] = c64::new(1.0, 0.0);
        assert!(matches!(psd_inv_sqrt(&skew, 0.0), Err(Error::Contract(_))));
        assert!(matches!(
            psd_inv_sqrt(&ComplexMatrix::zeros(2, 2), 1e-12),
            Err(Error::Singular { .. })
        ));
        assert!(matches!(
            psd_inv_sqrt(&real_diag(&[1.0, 0.0]), 0.0),
            Err(Error::Singular { .. })
        ));
        // Partial rank deficiency is clamped when jitter > 0.
        let r = psd_inv_sqrt(&real_diag(&[1.0, 0.0]), 1e-4).unwrap();
        assert!((r[(1, 1)].re - 100.0).abs() < 1e-9);
    }

    #[test]
    fn logdet_small_cases() {
        assert_eq!(
            logdet_identity_plus(&ComplexMatrix::zeros(3, 3)).unwrap(),
            0.0
        );
        let x = real_diag(&[std::f64::consts::E - 1.0]);
        assert!((logdet_identity_plus(&x).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn logdet_matches_eigenvalue_route() {
        let x = random_psd(3, 2, 8);
        let eig = hermitian_eigen(&x).unwrap();
        let expected: f64 = eig.values.iter().map(|l| (1.0 + l).ln()).sum();
        assert!((logdet_identity_plus(&x).unwrap() - expected).abs() < 1e-10);
    }

    #[test]
    fn logdet_rejects_indefinite() {
        let x = real_diag(&[1.0, -1e-6]);
        assert!(matches!(logdet_identity_plus(&x), Err(Error::Contract(_))));
        // Within tolerance is accepted.
        assert!(logdet_identity_plus(&real_diag(&[1.0, -1e-12])).is_ok());
    }

    #[test]
    fn pinv_of_wide_full_rank() {
        let m = random_matrix(3, 5, 21);
        let p = pinv(&m, None).unwrap();
        assert!(frobenius(&(&m * &p - identity(3))) < 1e-10);
    }

    #[test]
    fn complement_is_orthogonal() {
        let g = random_matrix(2, 5, 4);
        let svd = reduced_svd(&g, None).unwrap();
        let comp = orthogonal_complement(&svd.v, 5).unwrap();
        assert_eq!(comp.ncols(), 3);
        assert!(frobenius(&(&g * &comp)) < 1e-12);
        assert!(frobenius(&(comp.adjoint() * &comp - identity(3))) < 1e-12);
    }

    #[test]
    fn from_row_major_validates() {
        assert!(from_row_major(0, 1, &[]).is_err());
        assert!(from_row_major(1, 2, &[c64::new(1.0, 0.0)]).is_err());
        assert!(from_row_major(1, 1, &[c64::new(f64::INFINITY, 0.0)]).is_err());
        let m = from_row_major(1, 2, &[c64::new(1.0, 0.0), c64::new(0.0, 2.0)]).unwrap();
        assert_eq!(m[(0, 1)], c64::new(0.0, 2.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn svd_factors_orthonormal(rows in 1usize..6, cols in 1usize..6, seed in 0u64..10_000) {
                let m = random_matrix(rows, cols, seed);
                let svd = reduced_svd(&m, None).unwrap();
                let r = svd.rank();
                prop_assert!(frobenius(&(svd.u.adjoint() * &svd.u - identity(r))) < 1e-10);
                prop_assert!(frobenius(&(svd.v.adjoint() * &svd.v - identity(r))) < 1e-10);
                prop_assert!(frobenius(&(svd.reconstruct() - &m)) < 1e-9 * frobenius(&m));
            }

            #[test]
            fn inv_sqrt_commutes(n in 1usize..6, seed in 0u64..10_000) {
                let m = random_psd(n, n + 1, seed);
                let r = psd_inv_sqrt(&m, 1e-14).unwrap();
                prop_assert!(frobenius(&(&r * &m - &m * &r)) < 1e-8 * frobenius(&m).max(1.0));
            }

            #[test]
            fn logdet_is_monotone(n in 1usize..5, seed in 0u64..10_000) {
                let x = random_psd(n, 2, seed);
                let z = random_matrix(n, 1, seed + 1);
                let y = &x + &z * z.adjoint();
                let vx = logdet_identity_plus(&x).unwrap();
                let vy = logdet_identity_plus(&hermitian_part(&y)).unwrap();
                prop_assert!(vx >= 0.0);
                prop_assert!(vx <= vy + 1e-12);
            }
        }
    }
}
