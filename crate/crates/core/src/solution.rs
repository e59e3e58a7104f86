//! Solver output and the dual loop shared by the optimal and suboptimal
//! precoders.

use serde::{Deserialize, Serialize};

use crate::dual_solver::{self, CutKind, MinimizeOptions, OracleResponse, RefineOptions};
use crate::error::{Error, Result};
use crate::model::{matrix_to_pairs, MatrixPairs, ProblemInstance};
use crate::numerics::ComplexMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "optimal-A1")]
    Optimal,
    #[serde(rename = "suboptimal-A2")]
    Suboptimal,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Optimal => "optimal",
            Method::Suboptimal => "suboptimal",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// Guaranteed dual-gap tolerance for the ellipsoid phase.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting value for every dual variable.
    pub initial_mu: f64,
    /// Ellipsoid radius; `None` takes the smaller of [`default_radius`] and
    /// [`certified_radius`].
    pub initial_radius: Option<f64>,
    /// Run the active-set Newton refinement after the ellipsoid phase.
    pub refine: bool,
    /// Keep per-iteration records (needed for convergence plots only).
    pub record_trace: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 20_000,
            initial_mu: 0.2,
            initial_radius: None,
            refine: true,
            record_trace: false,
        }
    }
}

/// Per-user scalar sub-channel description: a receive decoder `U` (its
/// adjoint diagonalizes `H_k T_k`), channel gains and stream powers.
#[derive(Clone, Debug)]
pub struct UserStreams {
    pub decoder: ComplexMatrix,
    pub gains: Vec<f64>,
    pub powers: Vec<f64>,
}

impl UserStreams {
    /// `Σ_i ln(1 + gain_i² · power_i)`.
    pub fn rate(&self) -> f64 {
        self.gains
            .iter()
            .zip(&self.powers)
            .map(|(g, p)| (g * g * p).ln_1p())
            .sum()
    }
}

/// One ellipsoid (or bisection) iteration as seen by the precoder problem.
#[derive(Clone, Debug, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub mu: Vec<f64>,
    /// `None` when the center was cut without an objective evaluation.
    pub dual_value: Option<f64>,
    pub weighted_sum_rate: Option<f64>,
    pub group_powers: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub method: Method,
    pub covariances: Vec<ComplexMatrix>,
    pub precoders: Vec<ComplexMatrix>,
    pub streams: Vec<UserStreams>,
    pub per_user_rates: Vec<f64>,
    pub group_powers: Vec<f64>,
    pub primal_value: f64,
    pub dual_value: f64,
    pub duality_gap: f64,
    pub mu: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Whether the Newton refinement pass met its KKT target.
    pub refined: bool,
    pub trace: Vec<IterationRecord>,
}

impl Solution {
    pub fn sum_rate(&self) -> f64 {
        self.per_user_rates.iter().sum()
    }

    /// Groups whose consumed power is within `1e-6 · P_a` of the budget.
    pub fn active_groups(&self, budgets: &[f64]) -> usize {
        self.group_powers
            .iter()
            .zip(budgets)
            .filter(|(p, b)| (*b - *p).abs() < 1e-6 * *b)
            .count()
    }

    /// Duals above `1e-6`.
    pub fn positive_duals(&self) -> usize {
        self.mu.iter().filter(|&&m| m > 1e-6).count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SolutionDocument::from(self))?)
    }
}

/// JSON form of a [`Solution`]; matrices as rows of `[re, im]` pairs.
#[derive(Clone, Debug, Serialize)]
pub struct SolutionDocument {
    pub method: Method,
    pub covariances: Vec<MatrixPairs>,
    pub precoders: Vec<MatrixPairs>,
    pub per_user_rates: Vec<f64>,
    pub weighted_sum_rate: f64,
    pub group_powers: Vec<f64>,
    pub dual_value: f64,
    pub duality_gap: f64,
    pub mu: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl From<&Solution> for SolutionDocument {
    fn from(s: &Solution) -> Self {
        Self {
            method: s.method,
            covariances: s.covariances.iter().map(matrix_to_pairs).collect(),
            precoders: s.precoders.iter().map(matrix_to_pairs).collect(),
            per_user_rates: s.per_user_rates.clone(),
            weighted_sum_rate: s.primal_value,
            group_powers: s.group_powers.clone(),
            dual_value: s.dual_value,
            duality_gap: s.duality_gap,
            mu: s.mu.clone(),
            iterations: s.iterations,
            converged: s.converged,
        }
    }
}

/// One user's share of a Lagrangian maximization at fixed prices.
#[derive(Clone, Debug)]
pub(crate) struct UserPart {
    pub streams: UserStreams,
    /// `M × r`; the covariance is `T T^H`.
    pub precoder: ComplexMatrix,
}

impl UserPart {
    /// Diagonal of `T T^H`.
    pub fn antenna_powers(&self) -> Vec<f64> {
        self.precoder
            .row_iter()
            .map(|r| r.iter().map(|z| z.norm_sqr()).sum())
            .collect()
    }
}

pub(crate) enum Evaluation {
    Bounded(Vec<UserPart>),
    /// Lagrangian unbounded; cut direction for the dual solver.
    Unbounded(Vec<f64>),
}

struct Summary {
    value: f64,
    subgradient: Vec<f64>,
    weighted_rate: f64,
    group_powers: Vec<f64>,
}

fn summarize(problem: &ProblemInstance, mu: &[f64], users: &[UserPart]) -> Summary {
    let m = problem.num_antennas();
    let mut antenna = vec![0.0; m];
    let mut weighted_rate = 0.0;
    for (k, u) in users.iter().enumerate() {
        for (acc, p) in antenna.iter_mut().zip(u.antenna_powers()) {
            *acc += p;
        }
        weighted_rate += problem.weight(k) * u.streams.rate();
    }
    let group_powers = problem.masks.group_sums(&antenna);
    let budgets = problem.budgets();
    // g(μ) = Σ_k w_k r_k − Tr(B_μ S) + Σ_a μ_a P_a
    let value = weighted_rate
        + mu.iter()
            .zip(&budgets)
            .zip(&group_powers)
            .map(|((m, b), p)| m * (b - p))
            .sum::<f64>();
    let subgradient = budgets
        .iter()
        .zip(&group_powers)
        .map(|(b, p)| b - p)
        .collect();
    Summary {
        value,
        subgradient,
        weighted_rate,
        group_powers,
    }
}

pub(crate) fn to_response(
    problem: &ProblemInstance,
    mu: &[f64],
    eval: &Evaluation,
) -> OracleResponse {
    match eval {
        Evaluation::Unbounded(cut) => OracleResponse::Infeasible { cut: cut.clone() },
        Evaluation::Bounded(users) => {
            let s = summarize(problem, mu, users);
            OracleResponse::Value {
                value: s.value,
                subgradient: s.subgradient,
            }
        }
    }
}

/// `max(10, 10·K·max w_k)`.
pub fn default_radius(problem: &ProblemInstance) -> f64 {
    let wmax = problem
        .config
        .weights
        .iter()
        .fold(0.0_f64, |m, &w| m.max(w));
    (10.0 * problem.num_users() as f64 * wmax).max(10.0)
}

/// Radius of a ball around `mu0` that provably holds every dual minimizer.
///
/// Each per-user Lagrangian term is nonnegative (take `S_k = 0`), so
/// `Σ_a μ_a P_a ≤ g(μ)` everywhere and any minimizer lies in the simplex
/// `{μ ≥ 0, Σ_a μ_a P_a ≤ g(μ0)}`. The ball reaches its farthest vertex.
pub fn certified_radius(mu0: &[f64], value_at_mu0: f64, budgets: &[f64]) -> f64 {
    let origin = mu0.iter().map(|m| m * m).sum::<f64>().sqrt();
    let farthest = budgets
        .iter()
        .enumerate()
        .map(|(a, b)| {
            let vertex = value_at_mu0.max(0.0) / b;
            mu0.iter()
                .enumerate()
                .map(|(c, m)| if c == a { (vertex - m).powi(2) } else { m * m })
                .sum::<f64>()
                .sqrt()
        })
        .fold(origin, f64::max);
    farthest * (1.0 + 1e-9)
}

/// Minimizes the dual built from `eval`, refines it, and recovers a feasible
/// primal point.
pub(crate) fn run_dual<F>(
    problem: &ProblemInstance,
    opts: &SolveOptions,
    method: Method,
    eval: F,
) -> Result<Solution>
where
    F: Fn(&[f64]) -> Result<Evaluation>,
{
    let dim = problem.masks.count();
    let budgets = problem.budgets();
    let mut calls: Vec<Option<(f64, Vec<f64>)>> = Vec::new();
    let oracle = |mu: &[f64]| -> Result<OracleResponse> {
        let e = eval(mu)?;
        if opts.record_trace {
            calls.push(match &e {
                Evaluation::Bounded(users) => {
                    let s = summarize(problem, mu, users);
                    Some((s.weighted_rate, s.group_powers))
                }
                Evaluation::Unbounded(_) => None,
            });
        }
        Ok(to_response(problem, mu, &e))
    };
    let initial_mu = vec![opts.initial_mu; dim];
    let initial_radius = match opts.initial_radius {
        Some(r) => r,
        None => match eval(&initial_mu)? {
            Evaluation::Bounded(users) => {
                let g0 = summarize(problem, &initial_mu, &users).value;
                default_radius(problem).min(certified_radius(&initial_mu, g0, &budgets))
            }
            Evaluation::Unbounded(_) => default_radius(problem),
        },
    };
    let min = dual_solver::minimize(
        oracle,
        dim,
        &MinimizeOptions {
            initial_mu,
            initial_radius,
            tol: opts.tol,
            max_iter: opts.max_iter,
            record_trace: opts.record_trace,
        },
    )?;

    let mut trace = Vec::with_capacity(min.trace.len());
    let mut call = calls.into_iter();
    for state in &min.trace {
        let summary = if state.cut == CutKind::Orthant {
            None
        } else {
            call.next().flatten()
        };
        trace.push(IterationRecord {
            iteration: state.iteration,
            mu: state.center.clone(),
            dual_value: state.value,
            weighted_sum_rate: summary.as_ref().map(|s| s.0),
            group_powers: summary.map(|s| s.1),
        });
    }

    let mut mu = min.mu.clone();
    let mut refined = false;
    if opts.refine {
        let scale = budgets.iter().fold(0.0_f64, |m, &b| m.max(b));
        let outcome = dual_solver::refine(
            |m: &[f64]| eval(m).map(|e| to_response(problem, m, &e)),
            &min.mu,
            &RefineOptions {
                residual_tol: 1e-10 * scale,
                max_newton: 60,
            },
        )?;
        if let Some(r) = outcome {
            if r.value <= min.value + 1e-9 * min.value.abs().max(1.0) {
                mu = r.mu;
                refined = true;
            }
        }
    }

    let Evaluation::Bounded(mut users) = eval(&mu)? else {
        return Err(Error::Consistency(
            "dual optimum lies outside the bounded region".into(),
        ));
    };
    let dual = summarize(problem, &mu, &users);

    // Scale every stream uniformly so that no group exceeds its budget.
    let beta = dual
        .group_powers
        .iter()
        .zip(&budgets)
        .fold(
            1.0_f64,
            |b, (p, cap)| if *p > *cap { b.min(cap / p) } else { b },
        );
    if beta < 1.0 {
        let root = beta.sqrt();
        for u in &mut users {
            u.precoder *= crate::numerics::c64::new(root, 0.0);
            for p in &mut u.streams.powers {
                *p *= beta;
            }
        }
    }
    let primal = summarize(problem, &mu, &users);
    let per_user_rates = users.iter().map(|u| u.streams.rate()).collect();
    let covariances = users
        .iter()
        .map(|u| crate::numerics::hermitian_part(&(&u.precoder * u.precoder.adjoint())))
        .collect();
    let (precoders, streams) = users.into_iter().map(|u| (u.precoder, u.streams)).unzip();

    Ok(Solution {
        method,
        covariances,
        precoders,
        streams,
        per_user_rates,
        group_powers: primal.group_powers,
        primal_value: primal.weighted_rate,
        dual_value: dual.value,
        duality_gap: dual.value - primal.weighted_rate,
        mu,
        iterations: min.iterations,
        converged: min.converged || refined,
        refined,
        trace,
    })
}
