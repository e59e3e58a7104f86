//! Single-antenna receivers: zero-forcing beamforming.
//!
//! With `N = 1` every optimal covariance is rank one, so the optimal BD
//! solution is a set of beams. The conventional alternative steers along the
//! normalized columns of the channel pseudo-inverse.

use serde::Serialize;

use crate::bd_optimal;
use crate::bd_suboptimal::{self, ProjectedChannelSvd};
use crate::error::{Error, Result};
use crate::model::{matrix_to_pairs, ConstraintScheme, MatrixPairs, ProblemInstance};
use crate::numerics::{self, c64, ComplexMatrix};
use crate::solution::{Solution, SolveOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BeamMethod {
    OptimalPerGroup,
    PseudoInverseSumPower,
    /// Pseudo-inverse directions with per-group power optimization.
    PseudoInversePerGroup,
}

#[derive(Clone, Debug)]
pub struct BeamSet {
    pub method: BeamMethod,
    /// `M × 1` per user.
    pub beams: Vec<ComplexMatrix>,
    pub per_user_rates: Vec<f64>,
    pub weighted_sum_rate: f64,
}

#[derive(Serialize)]
struct BeamSetDocument<'a> {
    method: BeamMethod,
    beams: Vec<MatrixPairs>,
    per_user_rates: &'a [f64],
    weighted_sum_rate: f64,
}

impl BeamSet {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&BeamSetDocument {
            method: self.method,
            beams: self.beams.iter().map(matrix_to_pairs).collect(),
            per_user_rates: &self.per_user_rates,
            weighted_sum_rate: self.weighted_sum_rate,
        })?)
    }

    /// `H T`, `K × K`; diagonal under zero forcing.
    pub fn effective_channel(&self, problem: &ProblemInstance) -> ComplexMatrix {
        let k = self.beams.len();
        ComplexMatrix::from_fn(k, k, |j, i| (problem.channel(j) * &self.beams[i])[(0, 0)])
    }
}

fn require_miso(problem: &ProblemInstance) -> Result<()> {
    if problem.config.antennas_per_ms != 1 {
        return Err(Error::InvalidConfig(format!(
            "beamforming needs single-antenna receivers, got N = {}",
            problem.config.antennas_per_ms
        )));
    }
    Ok(())
}

/// Rotates `v` so that its largest-magnitude entry is real and positive.
pub fn fix_phase(v: &ComplexMatrix) -> ComplexMatrix {
    let pivot = v
        .iter()
        .copied()
        .max_by(|a, b| a.norm_sqr().total_cmp(&b.norm_sqr()))
        .unwrap_or(c64::new(0.0, 0.0));
    if pivot.norm() == 0.0 {
        return v.clone();
    }
    v * (pivot.conj() / pivot.norm())
}

/// `|⟨a, b⟩| / (‖a‖‖b‖)`.
pub fn collinearity(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    let inner = a.dotc(b).norm();
    inner / (a.norm() * b.norm())
}

/// Beam from a covariance that must be rank one (or zero).
fn extract_beam(s: &ComplexMatrix, k: usize) -> Result<ComplexMatrix> {
    let eig = numerics::hermitian_eigen(s)?;
    let top = eig.values[0];
    if top <= 1e-14 {
        return Ok(ComplexMatrix::zeros(s.nrows(), 1));
    }
    if eig
        .values
        .get(1)
        .is_some_and(|&second| second >= 1e-8 * top)
    {
        return Err(Error::Consistency(format!(
            "covariance of user {k} is not rank one ({} vs {top})",
            eig.values[1]
        )));
    }
    Ok(fix_phase(
        &(eig.vectors.columns(0, 1) * c64::new(top.sqrt(), 0.0)),
    ))
}

/// `λ^{1/2} σ̂^{-1} Ṽ (Ṽ^H B_μ Ṽ)^{-1} Ṽ^H h_k`.
fn closed_form_beam(problem: &ProblemInstance, sol: &Solution, k: usize) -> Result<ComplexMatrix> {
    let streams = &sol.streams[k];
    let m = problem.num_antennas();
    let (Some(&power), Some(&gain)) = (streams.powers.first(), streams.gains.first()) else {
        return Ok(ComplexMatrix::zeros(m, 1));
    };
    if power <= 0.0 {
        return Ok(ComplexMatrix::zeros(m, 1));
    }
    let basis = problem.basis(k);
    let price = problem.masks.price_diagonal(&sol.mu);
    let gram = basis.adjoint() * numerics::real_diag(&price) * basis;
    let max_mu = sol.mu.iter().fold(0.0_f64, |a, &b| a.max(b));
    let jitter = 1e-12 * (1.0 + max_mu);
    let inverse = numerics::hermitian_eigen(&gram)?.map(|x| 1.0 / x.max(jitter));
    let h = problem.channel(k).adjoint();
    let beam = basis * inverse * basis.adjoint() * h * c64::new(power.sqrt() / gain, 0.0);
    Ok(fix_phase(&beam))
}

/// Optimal BD beams under the instance's constraint scheme.
pub fn optimal_miso_beams(problem: &ProblemInstance, opts: &SolveOptions) -> Result<BeamSet> {
    require_miso(problem)?;
    let sol = bd_optimal::solve_optimal(problem, opts)?;
    let mut beams = Vec::with_capacity(problem.num_users());
    for k in 0..problem.num_users() {
        let beam = extract_beam(&sol.covariances[k], k)?;
        let direct = closed_form_beam(problem, &sol, k)?;
        let err = numerics::frobenius(&(&beam - &direct));
        if err > 1e-6 * beam.norm().max(1.0) {
            return Err(Error::Consistency(format!(
                "user {k}: extracted beam differs from the closed form by {err}"
            )));
        }
        beams.push(beam);
    }
    Ok(BeamSet {
        method: BeamMethod::OptimalPerGroup,
        beams,
        per_user_rates: sol.per_user_rates.clone(),
        weighted_sum_rate: sol.primal_value,
    })
}

/// Normalized pseudo-inverse columns and their effective gains
/// `|h_k^H u_k| = 1/‖g̃_k‖`.
fn pseudo_inverse_directions(problem: &ProblemInstance) -> Result<Vec<(ComplexMatrix, f64)>> {
    let (kk, m) = (problem.num_users(), problem.num_antennas());
    let mut h = ComplexMatrix::zeros(kk, m);
    for k in 0..kk {
        h.set_row(k, &problem.channel(k).row(0));
    }
    let svd = numerics::reduced_svd(&h, None)?;
    if svd.rank() < kk {
        return Err(Error::Infeasible(format!(
            "stacked channel has rank {} < {kk}",
            svd.rank()
        )));
    }
    let inv: Vec<f64> = svd.singular_values.iter().map(|s| 1.0 / s).collect();
    let pinv = &svd.v * numerics::real_diag(&inv) * svd.u.adjoint();
    Ok(pinv
        .column_iter()
        .map(|g| {
            let norm = g.norm();
            (
                ComplexMatrix::from_iterator(m, 1, g.iter().map(|z| z / norm)),
                1.0 / norm,
            )
        })
        .collect())
}

/// Zero-forcing beams along the pseudo-inverse columns. Under a sum-power
/// constraint the beam powers are water-filled directly; other schemes
/// optimize the powers per constraint group.
pub fn pseudo_inverse_beams(problem: &ProblemInstance, opts: &SolveOptions) -> Result<BeamSet> {
    require_miso(problem)?;
    let directions = pseudo_inverse_directions(problem)?;
    if problem.config.scheme != ConstraintScheme::SumPower {
        let svds: Vec<ProjectedChannelSvd> = directions
            .iter()
            .map(|(u, gain)| ProjectedChannelSvd {
                u: ComplexMatrix::identity(1, 1),
                singular_values: vec![*gain],
                v: u.clone(),
            })
            .collect();
        let sol = bd_suboptimal::solve_with_directions(problem, &svds, opts)?;
        return Ok(BeamSet {
            method: BeamMethod::PseudoInversePerGroup,
            beams: sol.precoders.iter().map(fix_phase).collect(),
            per_user_rates: sol.per_user_rates,
            weighted_sum_rate: sol.primal_value,
        });
    }

    let budget = problem.budgets()[0];
    let weights: Vec<f64> = (0..problem.num_users())
        .map(|k| problem.weight(k))
        .collect();
    let noise: Vec<f64> = directions.iter().map(|(_, g)| 1.0 / (g * g)).collect();
    let powers_at = |nu: f64| -> Vec<f64> {
        weights
            .iter()
            .zip(&noise)
            .map(|(w, n)| (w / nu - n).max(0.0))
            .collect()
    };
    // Bisection on the price ν: total power is decreasing in ν.
    let mut hi = weights
        .iter()
        .zip(&noise)
        .fold(0.0_f64, |m, (w, n)| m.max(w / n));
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if powers_at(mid).iter().sum::<f64>() > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let powers = powers_at(hi);
    let per_user_rates: Vec<f64> = powers
        .iter()
        .zip(&noise)
        .map(|(p, n)| (p / n).ln_1p())
        .collect();
    let weighted_sum_rate = per_user_rates
        .iter()
        .zip(&weights)
        .map(|(r, w)| r * w)
        .sum();
    let beams = directions
        .iter()
        .zip(&powers)
        .map(|((u, _), p)| fix_phase(&(u * c64::new(p.sqrt(), 0.0))))
        .collect();
    Ok(BeamSet {
        method: BeamMethod::PseudoInverseSumPower,
        beams,
        per_user_rates,
        weighted_sum_rate,
    })
}
