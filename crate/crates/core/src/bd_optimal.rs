//! Optimal block-diagonalization precoder under general linear power
//! constraints.
//!
//! For fixed prices `μ` the Lagrangian separates per user. In the null-space
//! coordinates of user `k` the price matrix becomes `M_k = Ṽ_k^H B_μ Ṽ_k`;
//! whitening with `M_k^{-1/2}` turns the subproblem into a sum-power
//! water-filling over the singular values of `H_k Ṽ_k M_k^{-1/2}`. The outer
//! dual minimization runs through [`crate::dual_solver`].

use crate::dual_solver::OracleResponse;
use crate::error::Result;
use crate::model::ProblemInstance;
use crate::numerics::{self, c64, ComplexMatrix, ReducedSvd};
use crate::solution::{self, Evaluation, Method, Solution, SolveOptions, UserPart, UserStreams};

/// Per-stream powers `(w − 1/σ_i²)^+`.
pub fn waterfill(weight: f64, gains: &[f64]) -> Vec<f64> {
    gains
        .iter()
        .map(|&s| {
            if s > 0.0 {
                (weight - 1.0 / (s * s)).max(0.0)
            } else {
                0.0
            }
        })
        .collect()
}

/// Maximizer of one user's Lagrangian term at fixed prices.
#[derive(Clone, Debug)]
pub struct InnerSolution {
    /// `M_k^{-1/2}`.
    pub whitening: ComplexMatrix,
    /// SVD of the whitened effective channel `H_k Ṽ_k M_k^{-1/2}`.
    pub effective: ReducedSvd,
    pub powers: Vec<f64>,
    /// Covariance in null-space coordinates, `d_k × d_k`.
    pub reduced_covariance: ComplexMatrix,
    /// `T_k = Ṽ_k M_k^{-1/2} V̂ Λ^{1/2}`, `M × r`.
    pub precoder: ComplexMatrix,
    /// `w_k Σ ln(1 + σ̂²λ) − Σ λ`.
    pub contribution: f64,
}

#[derive(Clone, Debug)]
pub enum InnerOutcome {
    Bounded(Box<InnerSolution>),
    /// Some null-space direction carries no price; the term is unbounded.
    Unbounded {
        cut: Vec<f64>,
    },
}

fn is_zero_price(m: f64) -> bool {
    m < 1e-8
}

/// Cut `−1_Z / √|Z|` over the zero-priced groups `Z`, if any.
fn zero_price_cut(mu: &[f64]) -> Option<Vec<f64>> {
    let zeros = mu.iter().filter(|&&m| is_zero_price(m)).count();
    (zeros > 0).then(|| {
        let scale = -1.0 / (zeros as f64).sqrt();
        mu.iter()
            .map(|&m| if is_zero_price(m) { scale } else { 0.0 })
            .collect()
    })
}

/// `Ṽ^H diag(price) Ṽ`.
fn weighted_gram(basis: &ComplexMatrix, price: &[f64]) -> ComplexMatrix {
    let mut scaled = basis.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row *= c64::new(price[i], 0.0);
    }
    numerics::hermitian_part(&(basis.adjoint() * scaled))
}

pub fn inner_solution(problem: &ProblemInstance, mu: &[f64], k: usize) -> Result<InnerOutcome> {
    let basis = problem.basis(k);
    let price = problem.masks.price_diagonal(mu);
    let gram = weighted_gram(basis, &price);
    let max_mu = mu.iter().fold(0.0_f64, |m, &v| m.max(v));
    let jitter = 1e-12 * (1.0 + max_mu);

    let eig = numerics::hermitian_eigen(&gram)?;
    let smallest = eig.values.last().copied().unwrap_or(0.0);
    if smallest <= jitter {
        if let Some(cut) = zero_price_cut(mu) {
            return Ok(InnerOutcome::Unbounded { cut });
        }
    }
    let whitening = eig.map(|x| 1.0 / x.max(jitter).sqrt());

    let effective = numerics::reduced_svd(&(problem.channel(k) * basis * &whitening), None)?;
    let powers = waterfill(problem.weight(k), &effective.singular_values);
    let roots: Vec<f64> = powers.iter().map(|p| p.sqrt()).collect();

    let shaped = &whitening * &effective.v;
    let precoder = basis * &shaped * numerics::real_diag(&roots);
    let reduced_covariance =
        numerics::hermitian_part(&(&shaped * numerics::real_diag(&powers) * shaped.adjoint()));
    let rate: f64 = effective
        .singular_values
        .iter()
        .zip(&powers)
        .map(|(s, p)| (s * s * p).ln_1p())
        .sum();
    let contribution = problem.weight(k) * rate - powers.iter().sum::<f64>();

    Ok(InnerOutcome::Bounded(Box::new(InnerSolution {
        whitening,
        effective,
        powers,
        reduced_covariance,
        precoder,
        contribution,
    })))
}

pub(crate) fn evaluate(problem: &ProblemInstance, mu: &[f64]) -> Result<Evaluation> {
    let mut users = Vec::with_capacity(problem.num_users());
    for k in 0..problem.num_users() {
        match inner_solution(problem, mu, k)? {
            InnerOutcome::Unbounded { cut } => return Ok(Evaluation::Unbounded(cut)),
            InnerOutcome::Bounded(inner) => users.push(UserPart {
                streams: UserStreams {
                    decoder: inner.effective.u,
                    gains: inner.effective.singular_values,
                    powers: inner.powers,
                },
                precoder: inner.precoder,
            }),
        }
    }
    Ok(Evaluation::Bounded(users))
}

/// Dual function value and subgradient `s_a = P_a − Σ_k Tr(B_a S_k)`.
pub fn dual_oracle(problem: &ProblemInstance, mu: &[f64]) -> Result<OracleResponse> {
    Ok(solution::to_response(problem, mu, &evaluate(problem, mu)?))
}

pub fn solve_optimal(problem: &ProblemInstance, opts: &SolveOptions) -> Result<Solution> {
    solution::run_dual(problem, opts, Method::Optimal, |mu| evaluate(problem, mu))
}

/// `U_k^H H_k T_k` for a solved instance; diagonal when block
/// diagonalization succeeded.
pub fn diagonalized_form(
    problem: &ProblemInstance,
    solution: &Solution,
    k: usize,
) -> ComplexMatrix {
    solution.streams[k].decoder.adjoint() * problem.channel(k) * &solution.precoders[k]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConstraintScheme, SystemConfig};
    use crate::numerics::frobenius;
    use crate::test_support::random_psd;

    fn instance(a: usize, mb: usize, k: usize, n: usize, p: f64, seed: u64) -> ProblemInstance {
        ProblemInstance::generate(SystemConfig::new(a, mb, k, n, p), seed).unwrap()
    }

    #[test]
    fn waterfill_levels() {
        assert_eq!(
            waterfill(1.0, &[2.0, 1.0, 0.5, 0.0]),
            vec![0.75, 0.0, 0.0, 0.0]
        );
        assert_eq!(waterfill(0.0, &[5.0]), vec![0.0]);
    }

    #[test]
    fn huge_prices_switch_everything_off() {
        let p = instance(2, 2, 2, 1, 10.0, 3);
        let OracleResponse::Value { value, subgradient } = dual_oracle(&p, &[1e9, 1e9]).unwrap()
        else {
            panic!("bounded prices reported as unbounded");
        };
        assert!((value - 1e9 * 20.0).abs() < 1e-3);
        assert_eq!(subgradient, vec![10.0, 10.0]);
    }

    #[test]
    fn zero_price_on_used_antennas_is_unbounded() {
        let p = instance(2, 2, 2, 1, 10.0, 3);
        let OracleResponse::Infeasible { cut } = dual_oracle(&p, &[0.0, 1.0]).unwrap() else {
            panic!("zero price must be unbounded");
        };
        assert_eq!(cut, vec![-1.0, 0.0]);
    }

    #[test]
    fn inner_solution_beats_random_covariances() {
        let p = instance(2, 2, 2, 2, 10.0, 5);
        let mu = [0.7, 1.3];
        let k = 1;
        let InnerOutcome::Bounded(inner) = inner_solution(&p, &mu, k).unwrap() else {
            panic!("unexpected unbounded term");
        };
        let basis = p.basis(k);
        let price = p.masks.price_diagonal(&mu);
        let gram = weighted_gram(basis, &price);
        let f = p.channel(k) * basis;
        let lagrangian = |q: &ComplexMatrix| {
            let x = numerics::hermitian_part(&(&f * q * f.adjoint()));
            p.weight(k) * numerics::logdet_identity_plus(&x).unwrap() - (&gram * q).trace().re
        };
        let best = lagrangian(&inner.reduced_covariance);
        assert!((best - inner.contribution).abs() < 1e-9 * best.abs().max(1.0));
        for seed in 0..30 {
            for eps in [1e-3, 1e-1, 1.0] {
                let d = random_psd(basis.ncols(), 1, seed).scale(eps);
                let trial = &inner.reduced_covariance + d;
                assert!(lagrangian(&trial) <= best + 1e-10);
            }
        }
    }

    #[test]
    fn single_user_sum_power_matches_eigen_waterfilling() {
        let cfg = SystemConfig::new(1, 4, 1, 3, 5.0).with_scheme(ConstraintScheme::SumPower);
        let p = ProblemInstance::generate(cfg, 9).unwrap();
        let sol = solve_optimal(&p, &SolveOptions::default()).unwrap();
        // Independent route: water level by bisection on eigenvalues of H H^H.
        let h = p.channel(0);
        let eig = numerics::hermitian_eigen(&(h * h.adjoint())).unwrap();
        let (mut lo, mut hi) = (0.0_f64, 100.0_f64);
        for _ in 0..200 {
            let level = 0.5 * (lo + hi);
            let used: f64 = eig.values.iter().map(|g| (level - 1.0 / g).max(0.0)).sum();
            if used > 5.0 {
                hi = level
            } else {
                lo = level
            }
        }
        let capacity: f64 = eig.values.iter().map(|g| (lo * g).max(1.0).ln()).sum();
        assert!(
            (sol.sum_rate() - capacity).abs() < 1e-7,
            "{} vs {capacity}",
            sol.sum_rate()
        );
    }

    #[test]
    fn optimum_satisfies_complementary_slackness() {
        let p = instance(2, 4, 4, 2, 10.0, 1);
        let sol = solve_optimal(&p, &SolveOptions::default()).unwrap();
        for ((m, g), b) in sol.mu.iter().zip(&sol.group_powers).zip(p.budgets()) {
            assert!(*g <= b + 1e-6);
            assert!(m * (b - g) < 1e-6, "μ={m}, slack={}", b - g);
        }
        assert!(sol.duality_gap >= -1e-9 && sol.duality_gap <= 1e-4 * sol.primal_value);
    }

    #[test]
    fn precoders_block_diagonalize() {
        let p = instance(2, 3, 3, 2, 10.0, 4);
        let sol = solve_optimal(&p, &SolveOptions::default()).unwrap();
        for k in 0..3 {
            for j in p.protected_users(k) {
                assert!(frobenius(&(p.channel(j) * &sol.precoders[k])) < 1e-8);
            }
            let mut d = diagonalized_form(&p, &sol, k);
            for i in 0..d.nrows().min(d.ncols()) {
                d[(i, i)] = c64::new(0.0, 0.0);
            }
            assert!(frobenius(&d) < 1e-8);
        }
    }
}
