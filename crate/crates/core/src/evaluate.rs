//! Solver-independent metrics and a slow first-order reference solver.

use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::model::{ConstraintScheme, PrecodingMode, ProblemInstance};
use crate::numerics::{self, c64, ComplexMatrix};
use crate::solution::{Method, Solution};

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub weighted_sum_rate: f64,
    pub per_user_rates: Vec<f64>,
    pub per_group_powers: Vec<f64>,
    /// Groups with `|P_a − power_a| < 1e-6 · P_a`.
    pub active_groups: usize,
    /// `max_{k, j protected} ‖H_j S_k‖_F`.
    pub max_zf_residual: f64,
    pub min_covariance_eigenvalue: f64,
}

/// Rates, powers and residuals of a set of transmit covariances.
pub fn metrics(covariances: &[ComplexMatrix], problem: &ProblemInstance) -> Result<Metrics> {
    let m = problem.num_antennas();
    if covariances.len() != problem.num_users() || covariances.iter().any(|s| s.shape() != (m, m)) {
        return Err(Error::Contract(format!(
            "expected {} covariances of size {m}x{m}",
            problem.num_users()
        )));
    }
    let mut per_user_rates = Vec::with_capacity(covariances.len());
    let mut diagonal = vec![0.0; m];
    let mut max_zf_residual = 0.0_f64;
    let mut min_covariance_eigenvalue = f64::INFINITY;
    for (k, s) in covariances.iter().enumerate() {
        if !numerics::is_hermitian(s, 1e-9) {
            return Err(Error::Contract(format!("covariance {k} is not Hermitian")));
        }
        let h = problem.channel(k);
        per_user_rates.push(numerics::logdet_identity_plus(&numerics::hermitian_part(
            &(h * s * h.adjoint()),
        ))?);
        for (i, d) in diagonal.iter_mut().enumerate() {
            *d += s[(i, i)].re;
        }
        for j in problem.protected_users(k) {
            let hj = problem.channel(j);
            max_zf_residual = max_zf_residual.max(numerics::frobenius(&(hj * s)));
        }
        let eig = numerics::hermitian_eigen(s)?;
        min_covariance_eigenvalue = min_covariance_eigenvalue.min(*eig.values.last().unwrap());
    }
    let per_group_powers = problem.masks.group_sums(&diagonal);
    let active_groups = per_group_powers
        .iter()
        .zip(problem.budgets())
        .filter(|(p, b)| (b - *p).abs() < 1e-6 * b)
        .count();
    let weighted_sum_rate = per_user_rates
        .iter()
        .enumerate()
        .map(|(k, r)| problem.weight(k) * r)
        .sum();
    Ok(Metrics {
        weighted_sum_rate,
        per_user_rates,
        per_group_powers,
        active_groups,
        max_zf_residual,
        min_covariance_eigenvalue,
    })
}

/// Structural checks on one solved instance.
#[derive(Clone, Debug, PartialEq)]
pub struct InvariantReport {
    /// `(dual − primal) / primal`.
    pub relative_gap: f64,
    /// Largest of `‖H_j S_k‖_F` and `‖H_j T_k‖_F` over protected pairs.
    pub max_zf_residual: f64,
    /// `max_a (power_a − P_a)`.
    pub max_power_excess: f64,
    pub min_covariance_eigenvalue: f64,
    /// Largest off-diagonal magnitude of `U_k^H H_k T_k`.
    pub max_off_diagonal: f64,
    /// Largest off-diagonal of `T_k^H T_k` relative to `‖T_k‖²`; sum-power only.
    pub column_coupling: Option<f64>,
    /// Second over first covariance eigenvalue; single-antenna receivers only.
    pub rank_one_ratio: Option<f64>,
    pub positive_duals: usize,
    /// Required positive duals; optimal BD solutions only.
    pub required_positive_duals: Option<usize>,
}

impl InvariantReport {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |ok: bool, what: String| {
            if !ok {
                out.push(what);
            }
        };
        check(
            self.relative_gap <= 1e-4 && self.relative_gap >= -1e-9,
            format!("relative duality gap {:e}", self.relative_gap),
        );
        check(
            self.max_zf_residual <= 1e-8,
            format!("ZF residual {:e}", self.max_zf_residual),
        );
        check(
            self.max_power_excess <= 1e-6,
            format!("power excess {:e}", self.max_power_excess),
        );
        check(
            self.min_covariance_eigenvalue >= -1e-9,
            format!("covariance eigenvalue {:e}", self.min_covariance_eigenvalue),
        );
        check(
            self.max_off_diagonal <= 1e-8,
            format!("diagonalization off-diagonal {:e}", self.max_off_diagonal),
        );
        if let Some(c) = self.column_coupling {
            check(c <= 1e-8, format!("precoder column coupling {c:e}"));
        }
        if let Some(r) = self.rank_one_ratio {
            check(r < 1e-8, format!("covariance eigenvalue ratio {r:e}"));
        }
        if let Some(req) = self.required_positive_duals {
            check(
                self.positive_duals >= req,
                format!("{} positive duals, need {req}", self.positive_duals),
            );
        }
        out
    }
}

pub fn check_invariants(problem: &ProblemInstance, sol: &Solution) -> Result<InvariantReport> {
    let m = metrics(&sol.covariances, problem)?;
    let max_power_excess = m
        .per_group_powers
        .iter()
        .zip(problem.budgets())
        .map(|(p, b)| p - b)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut max_off_diagonal = 0.0_f64;
    let mut coupling = 0.0_f64;
    let mut ratio = 0.0_f64;
    let mut max_zf_residual = m.max_zf_residual;
    for k in 0..problem.num_users() {
        let t = &sol.precoders[k];
        for j in problem.protected_users(k) {
            max_zf_residual = max_zf_residual.max(numerics::frobenius(&(problem.channel(j) * t)));
        }
        let d = sol.streams[k].decoder.adjoint() * problem.channel(k) * t;
        let g = t.adjoint() * t;
        let scale = g.diagonal().iter().map(|z| z.re).fold(1.0_f64, f64::max);
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                if i != j {
                    coupling = coupling.max(g[(i, j)].norm() / scale);
                }
            }
        }
        for i in 0..d.nrows() {
            for j in 0..d.ncols() {
                if i != j {
                    max_off_diagonal = max_off_diagonal.max(d[(i, j)].norm());
                }
            }
        }
        let eig = numerics::hermitian_eigen(&sol.covariances[k])?;
        if eig.values[0] > 1e-14 && eig.values.len() > 1 {
            ratio = ratio.max(eig.values[1] / eig.values[0]);
        }
    }
    let cfg = &problem.config;
    Ok(InvariantReport {
        relative_gap: sol.duality_gap / sol.primal_value.abs().max(1e-12),
        max_zf_residual,
        max_power_excess,
        min_covariance_eigenvalue: m.min_covariance_eigenvalue,
        max_off_diagonal,
        column_coupling: (cfg.scheme == ConstraintScheme::SumPower).then_some(coupling),
        rank_one_ratio: (cfg.antennas_per_ms == 1).then_some(ratio),
        positive_duals: sol.positive_duals(),
        required_positive_duals: (sol.method == Method::Optimal && cfg.mode == PrecodingMode::Bd)
            .then(|| problem.min_positive_duals()),
    })
}

#[derive(Clone, Debug)]
pub struct OracleOptions {
    /// Total projected-gradient steps across all outer rounds.
    pub max_steps: usize,
    /// Norm of the projected-gradient mapping that ends an inner solve.
    pub stationarity: f64,
    /// Initial augmented-Lagrangian penalty weight; grown tenfold whenever a
    /// round fails to cut the violation by 4x.
    pub penalty: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            max_steps: 50_000,
            stationarity: 1e-7,
            penalty: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OracleOutcome {
    /// Weighted sum-rate of the returned (feasible) covariances.
    pub value: f64,
    pub covariances: Vec<ComplexMatrix>,
    pub converged: bool,
    pub steps: usize,
    /// Largest relative budget violation before the final feasibility scaling.
    pub max_violation: f64,
}

struct Reduced {
    /// `H_k Ṽ_k`.
    channel: ComplexMatrix,
    /// `Ṽ_k^H B_a Ṽ_k` for every group.
    group_grams: Vec<ComplexMatrix>,
    weight: f64,
}

impl Reduced {
    fn powers(&self, q: &ComplexMatrix) -> Vec<f64> {
        self.group_grams
            .iter()
            .map(|c| (c * q).trace().re)
            .collect()
    }

    /// `w log|I + F Q F^H|` and its gradient `w F^H (I + F Q F^H)^{-1} F`.
    fn rate_and_gradient(&self, q: &ComplexMatrix) -> Option<(f64, ComplexMatrix)> {
        let f = &self.channel;
        let n = f.nrows();
        let x = numerics::hermitian_part(&(f * q * f.adjoint())) + ComplexMatrix::identity(n, n);
        let chol = Cholesky::new(x)?;
        let logdet: f64 = (0..n).map(|i| 2.0 * chol.l_dirty()[(i, i)].re.ln()).sum();
        let grad = f.adjoint() * chol.inverse() * f * c64::new(self.weight, 0.0);
        Some((self.weight * logdet, numerics::hermitian_part(&grad)))
    }
}

fn project_psd(q: &ComplexMatrix) -> Result<ComplexMatrix> {
    Ok(numerics::hermitian_eigen(q)?.map(|x| x.max(0.0)))
}

fn inner_product(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Weighted sum-rate maximum by projected-gradient ascent on the null-space
/// covariances, with the group power budgets enforced by an augmented
/// Lagrangian. Slow, but shares no code path with the dual solvers beyond
/// the null-space bases.
pub fn oracle_solve(problem: &ProblemInstance, opts: &OracleOptions) -> Result<OracleOutcome> {
    let budgets = problem.budgets();
    let groups = problem.masks.count();
    let users: Vec<Reduced> = (0..problem.num_users())
        .map(|k| {
            let basis = problem.basis(k);
            Reduced {
                channel: problem.channel(k) * basis,
                group_grams: (0..groups)
                    .map(|a| {
                        numerics::hermitian_part(
                            &(basis.adjoint() * problem.masks.matrix(a) * basis),
                        )
                    })
                    .collect(),
                weight: problem.weight(k),
            }
        })
        .collect();

    let start = budgets.iter().fold(f64::INFINITY, |m, &b| m.min(b))
        / (problem.num_users() * problem.num_antennas()) as f64;
    let mut q: Vec<ComplexMatrix> = users
        .iter()
        .map(|u| {
            let d = u.channel.ncols();
            ComplexMatrix::identity(d, d).scale(start)
        })
        .collect();
    let mut y = vec![0.0; groups];
    let mut rho = opts.penalty;
    let mut last_violation = f64::INFINITY;

    // Augmented Lagrangian Φ(Q) = f(Q) − Σ_a ((y_a + ρ g_a)_+² − y_a²) / 2ρ.
    let phi =
        |q: &[ComplexMatrix], y: &[f64], rho: f64| -> Option<(f64, Vec<f64>, Vec<ComplexMatrix>)> {
            let mut value = 0.0;
            let mut grads = Vec::with_capacity(q.len());
            let mut used = vec![0.0; groups];
            for (u, qk) in users.iter().zip(q) {
                let (r, g) = u.rate_and_gradient(qk)?;
                value += r;
                grads.push(g);
                for (acc, p) in used.iter_mut().zip(u.powers(qk)) {
                    *acc += p;
                }
            }
            let nu: Vec<f64> = (0..groups)
                .map(|a| (y[a] + rho * (used[a] - budgets[a])).max(0.0))
                .collect();
            for a in 0..groups {
                value -= (nu[a] * nu[a] - y[a] * y[a]) / (2.0 * rho);
            }
            for (u, g) in users.iter().zip(&mut grads) {
                for (c, n) in u.group_grams.iter().zip(&nu) {
                    *g -= c * c64::new(*n, 0.0);
                }
            }
            Some((value, nu, grads))
        };

    let mut steps = 0;
    let mut step = 1.0;
    let mut converged = false;
    let eval_failure = || Error::NumericFailure {
        rows: 0,
        cols: 0,
        what: "reference solver left the log-det domain",
    };
    'outer: for _round in 0..500 {
        let (mut value, mut nu, mut grads) = phi(&q, &y, rho).ok_or_else(eval_failure)?;
        let mut inner_done = false;
        while steps < opts.max_steps {
            steps += 1;
            let mut accepted = None;
            for _ in 0..60 {
                let trial: Vec<ComplexMatrix> = q
                    .iter()
                    .zip(&grads)
                    .map(|(qk, g)| project_psd(&(qk + g * c64::new(step, 0.0))))
                    .collect::<Result<_>>()?;
                let diff: Vec<ComplexMatrix> = trial.iter().zip(&q).map(|(t, qk)| t - qk).collect();
                let lin: f64 = grads
                    .iter()
                    .zip(&diff)
                    .map(|(g, d)| inner_product(g, d))
                    .sum();
                let sq: f64 = diff.iter().map(|d| d.norm_squared()).sum();
                if let Some((v, n, g)) = phi(&trial, &y, rho) {
                    if v >= value + lin - sq / (2.0 * step) - 1e-15 * value.abs() {
                        accepted = Some((trial, v, n, g, sq.sqrt() / step));
                        break;
                    }
                }
                step *= 0.5;
            }
            let Some((trial, v, n, g, mapping)) = accepted else {
                // No representable ascent left: stationary to working precision.
                inner_done = true;
                step = 1.0;
                break;
            };
            q = trial;
            value = v;
            nu = n;
            grads = g;
            step *= 1.5;
            if mapping <= opts.stationarity {
                inner_done = true;
                break;
            }
        }
        if !inner_done {
            break 'outer;
        }
        let violation = max_violation(&users, &q, &budgets);
        let shift: f64 = y
            .iter()
            .zip(&nu)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        y = nu;
        if violation <= 1e-9 && shift <= 1e-7 * y.iter().fold(1.0_f64, |m, &v| m.max(v)) {
            converged = true;
            break;
        }
        if violation > 1e-9 && violation > 0.25 * last_violation {
            rho = (rho * 10.0).min(1e8);
        }
        last_violation = violation;
    }

    let violation = max_violation(&users, &q, &budgets);
    let mut used = vec![0.0; groups];
    for (u, qk) in users.iter().zip(&q) {
        for (acc, p) in used.iter_mut().zip(u.powers(qk)) {
            *acc += p;
        }
    }
    let beta = used.iter().zip(&budgets).fold(
        1.0_f64,
        |b, (p, cap)| if *p > *cap { b.min(cap / p) } else { b },
    );
    let mut value = 0.0;
    let mut covariances = Vec::with_capacity(q.len());
    for (k, (u, qk)) in users.iter().zip(&q).enumerate() {
        let scaled = qk.scale(beta);
        value += u.rate_and_gradient(&scaled).ok_or_else(eval_failure)?.0;
        let basis = problem.basis(k);
        covariances.push(numerics::hermitian_part(
            &(basis * &scaled * basis.adjoint()),
        ));
    }
    Ok(OracleOutcome {
        value,
        covariances,
        converged,
        steps,
        max_violation: violation,
    })
}

fn max_violation(users: &[Reduced], q: &[ComplexMatrix], budgets: &[f64]) -> f64 {
    let mut used = vec![0.0; budgets.len()];
    for (u, qk) in users.iter().zip(q) {
        for (acc, p) in used.iter_mut().zip(u.powers(qk)) {
            *acc += p;
        }
    }
    used.iter()
        .zip(budgets)
        .map(|(p, b)| ((p - b) / b).max(0.0))
        .fold(0.0, f64::max)
}
