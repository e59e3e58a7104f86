//! Conventional block diagonalization: transmit directions from the SVD of
//! each user's projected channel `H_k Ṽ_k Ṽ_k^H`, with the stream powers
//! optimized under the per-group constraints.

use crate::error::{Error, Result};
use crate::model::ProblemInstance;
use crate::numerics::{self, ComplexMatrix, ReducedSvd};
use crate::solution::{self, Evaluation, Method, Solution, SolveOptions, UserPart, UserStreams};

/// Reduced SVD `U^⊥ Σ^⊥ (V^⊥)^H` of a projected channel.
pub type ProjectedChannelSvd = ReducedSvd;

#[derive(Clone, Debug)]
pub struct SuboptimalAllocation {
    /// `λ̄[k][i]`.
    pub powers: Vec<Vec<f64>>,
    /// `‖v_k^⊥[a, i]‖²` stored as `coupling[k][i][a]`.
    pub coupling: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug)]
pub enum AllocationOutcome {
    Bounded(SuboptimalAllocation),
    Unbounded { cut: Vec<f64> },
}

pub fn projected_channel_svd(problem: &ProblemInstance, k: usize) -> Result<ProjectedChannelSvd> {
    let basis = problem.basis(k);
    let projected = problem.channel(k) * basis * basis.adjoint();
    let svd = numerics::reduced_svd(&projected, None)?;
    let n = problem.config.antennas_per_ms;
    if svd.rank() < n {
        return Err(Error::NumericFailure {
            rows: projected.nrows(),
            cols: projected.ncols(),
            what: "projected channel lost rank",
        });
    }
    Ok(svd)
}

pub fn projected_channel_svds(problem: &ProblemInstance) -> Result<Vec<ProjectedChannelSvd>> {
    (0..problem.num_users())
        .map(|k| projected_channel_svd(problem, k))
        .collect()
}

/// Per-group energy of every unit-norm transmit direction.
pub fn coupling_norms(
    problem: &ProblemInstance,
    svds: &[ProjectedChannelSvd],
) -> Vec<Vec<Vec<f64>>> {
    svds.iter()
        .map(|svd| {
            svd.v
                .column_iter()
                .map(|col| {
                    let energy: Vec<f64> = col.iter().map(|z| z.norm_sqr()).collect();
                    problem.masks.group_sums(&energy)
                })
                .collect()
        })
        .collect()
}

/// Stream powers `λ̄ = (w_k / Σ_a μ_a ‖v[a,i]‖² − 1/σ²)^+` at prices `μ`.
pub fn suboptimal_power_allocation(
    problem: &ProblemInstance,
    svds: &[ProjectedChannelSvd],
    mu: &[f64],
) -> AllocationOutcome {
    let coupling = coupling_norms(problem, svds);
    match allocate(problem, svds, &coupling, mu) {
        Ok(powers) => AllocationOutcome::Bounded(SuboptimalAllocation { powers, coupling }),
        Err(cut) => AllocationOutcome::Unbounded { cut },
    }
}

/// Stream powers, or the cut over zero-priced groups when a stream is free.
fn allocate(
    problem: &ProblemInstance,
    svds: &[ProjectedChannelSvd],
    coupling: &[Vec<Vec<f64>>],
    mu: &[f64],
) -> std::result::Result<Vec<Vec<f64>>, Vec<f64>> {
    let mut powers = Vec::with_capacity(svds.len());
    for (k, (svd, couple)) in svds.iter().zip(coupling).enumerate() {
        let w = problem.weight(k);
        let mut user = Vec::with_capacity(svd.rank());
        for (&sigma, c) in svd.singular_values.iter().zip(couple) {
            if sigma <= 0.0 {
                user.push(0.0);
                continue;
            }
            let price: f64 = c.iter().zip(mu).map(|(e, m)| e * m).sum();
            if price <= 0.0 {
                if w <= 0.0 {
                    user.push(0.0);
                    continue;
                }
                let zeros: Vec<bool> = c
                    .iter()
                    .zip(mu)
                    .map(|(&e, &m)| e > 1e-14 && m < 1e-8)
                    .collect();
                let count = zeros.iter().filter(|&&z| z).count().max(1) as f64;
                let cut = zeros
                    .iter()
                    .map(|&z| if z { -1.0 / count.sqrt() } else { 0.0 })
                    .collect();
                return Err(cut);
            }
            user.push((w / price - 1.0 / (sigma * sigma)).max(0.0));
        }
        powers.push(user);
    }
    Ok(powers)
}

fn evaluate(
    problem: &ProblemInstance,
    svds: &[ProjectedChannelSvd],
    coupling: &[Vec<Vec<f64>>],
    mu: &[f64],
) -> Evaluation {
    match allocate(problem, svds, coupling, mu) {
        Err(cut) => Evaluation::Unbounded(cut),
        Ok(all_powers) => Evaluation::Bounded(
            svds.iter()
                .zip(all_powers)
                .map(|(svd, powers)| {
                    let roots: Vec<f64> = powers.iter().map(|p| p.sqrt()).collect();
                    UserPart {
                        precoder: &svd.v * numerics::real_diag(&roots),
                        streams: UserStreams {
                            decoder: svd.u.clone(),
                            gains: svd.singular_values.clone(),
                            powers,
                        },
                    }
                })
                .collect(),
        ),
    }
}

/// Dual loop over per-group prices with the transmit directions held fixed.
pub(crate) fn solve_with_directions(
    problem: &ProblemInstance,
    svds: &[ProjectedChannelSvd],
    opts: &SolveOptions,
) -> Result<Solution> {
    let coupling = coupling_norms(problem, svds);
    let sol = solution::run_dual(problem, opts, Method::Suboptimal, |mu| {
        Ok(evaluate(problem, svds, &coupling, mu))
    })?;
    for (k, (s, rate)) in sol.covariances.iter().zip(&sol.per_user_rates).enumerate() {
        let h = problem.channel(k);
        let full =
            numerics::logdet_identity_plus(&numerics::hermitian_part(&(h * s * h.adjoint())))?;
        if (full - rate).abs() > 1e-8 * rate.max(1.0) {
            return Err(Error::Consistency(format!(
                "user {k}: stream rate {rate} disagrees with log-det rate {full}"
            )));
        }
    }
    Ok(sol)
}

pub fn solve_suboptimal(problem: &ProblemInstance, opts: &SolveOptions) -> Result<Solution> {
    solve_with_directions(problem, &projected_channel_svds(problem)?, opts)
}

/// `V^⊥ diag(λ̄) (V^⊥)^H`.
pub fn allocation_covariance(svd: &ProjectedChannelSvd, powers: &[f64]) -> ComplexMatrix {
    numerics::hermitian_part(&(&svd.v * numerics::real_diag(powers) * svd.v.adjoint()))
}
