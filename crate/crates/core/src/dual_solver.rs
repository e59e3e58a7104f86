//! Minimization of a convex function over the nonnegative orthant from a
//! value-and-subgradient oracle.
//!
//! Two or more dimensions use the central-cut ellipsoid method; one dimension
//! uses bisection on the subgradient sign. [`refine`] is an optional
//! active-set Newton pass for oracles whose function is smooth near the
//! optimum, used to recover primal quantities to high accuracy.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// What the oracle reports at a query point.
#[derive(Clone, Debug, PartialEq)]
pub enum OracleResponse {
    /// Finite value and a subgradient at the query point.
    Value { value: f64, subgradient: Vec<f64> },
    /// The function is unbounded (+∞) at the query point; the optimum lies in
    /// the half-space `{μ : cut · (μ − query) ≤ 0}`.
    Infeasible { cut: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CutKind {
    /// A coordinate of the center was negative.
    Orthant,
    /// The oracle reported the center outside its domain.
    Domain,
    /// Objective cut from the subgradient.
    Objective,
}

/// Solver state after one iteration.
#[derive(Clone, Debug)]
pub struct DualState {
    pub iteration: usize,
    /// The point queried in this iteration.
    pub center: Vec<f64>,
    /// Shape matrix of the ellipsoid the center was taken from (for
    /// bisection, the 1×1 matrix holding the squared half-width).
    pub shape: DMatrix<f64>,
    pub cut: CutKind,
    pub value: Option<f64>,
    pub subgradient: Option<Vec<f64>>,
    pub best_value: f64,
    pub best_mu: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct MinimizeOptions {
    pub initial_mu: Vec<f64>,
    pub initial_radius: f64,
    /// Absolute tolerance on the guaranteed objective gap.
    pub tol: f64,
    pub max_iter: usize,
    pub record_trace: bool,
}

#[derive(Clone, Debug)]
pub struct MinimizeResult {
    /// Best feasible point seen.
    pub mu: Vec<f64>,
    pub value: f64,
    pub subgradient: Vec<f64>,
    /// Certified lower bound on the optimum.
    pub lower_bound: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<DualState>,
}

pub fn minimize<F>(mut oracle: F, dim: usize, opts: &MinimizeOptions) -> Result<MinimizeResult>
where
    F: FnMut(&[f64]) -> Result<OracleResponse>,
{
    if dim == 0 || opts.initial_mu.len() != dim {
        return Err(Error::Contract(format!(
            "dual dimension {dim} with initial point of length {}",
            opts.initial_mu.len()
        )));
    }
    if !(opts.tol > 0.0 && opts.initial_radius > 0.0) {
        return Err(Error::Contract(
            "tolerance and radius must be positive".into(),
        ));
    }
    if dim == 1 {
        bisect(&mut oracle, opts)
    } else {
        ellipsoid(&mut oracle, dim, opts)
    }
}

fn check_response(resp: &OracleResponse, dim: usize) -> Result<()> {
    let v = match resp {
        OracleResponse::Value { value, subgradient } => {
            if !value.is_finite() {
                return Err(Error::Contract("oracle returned a non-finite value".into()));
            }
            subgradient
        }
        OracleResponse::Infeasible { cut } => cut,
    };
    if v.len() != dim || !v.iter().all(|x| x.is_finite()) {
        return Err(Error::Contract(
            "oracle vector has wrong length or non-finite entries".into(),
        ));
    }
    Ok(())
}

struct Best {
    value: f64,
    mu: Vec<f64>,
    subgradient: Vec<f64>,
}

impl Best {
    fn offer(&mut self, value: f64, mu: &[f64], s: &[f64]) {
        if value < self.value {
            self.value = value;
            self.mu = mu.to_vec();
            self.subgradient = s.to_vec();
        }
    }
}

fn ellipsoid<F>(oracle: &mut F, n: usize, opts: &MinimizeOptions) -> Result<MinimizeResult>
where
    F: FnMut(&[f64]) -> Result<OracleResponse>,
{
    let nf = n as f64;
    let mut x = DVector::from_column_slice(&opts.initial_mu);
    let mut shape = DMatrix::<f64>::identity(n, n) * opts.initial_radius.powi(2);
    let mut best = Best {
        value: f64::INFINITY,
        mu: opts.initial_mu.clone(),
        subgradient: vec![0.0; n],
    };
    let mut lower = f64::NEG_INFINITY;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for iteration in 1..=opts.max_iter {
        iterations = iteration;
        let center: Vec<f64> = x.iter().copied().collect();
        let (kind, g, value) = match center.iter().position(|&v| v < 0.0) {
            Some(a) => {
                let mut g = vec![0.0; n];
                g[a] = -1.0;
                (CutKind::Orthant, g, None)
            }
            None => {
                let resp = oracle(&center)?;
                check_response(&resp, n)?;
                match resp {
                    OracleResponse::Infeasible { cut } => (CutKind::Domain, cut, None),
                    OracleResponse::Value { value, subgradient } => {
                        best.offer(value, &center, &subgradient);
                        (CutKind::Objective, subgradient, Some(value))
                    }
                }
            }
        };

        let gv = DVector::from_column_slice(&g);
        let pg = &shape * &gv;
        let gpg = gv.dot(&pg);
        if let Some(v) = value {
            lower = lower.max(v - gpg.max(0.0).sqrt());
        }
        if opts.record_trace {
            trace.push(DualState {
                iteration,
                center: center.clone(),
                shape: shape.clone(),
                cut: kind,
                value,
                subgradient: value.map(|_| g.clone()),
                best_value: best.value,
                best_mu: best.mu.clone(),
            });
        }
        if value.is_some() && (gpg == 0.0 || best.value - lower <= opts.tol) {
            converged = true;
            break;
        }
        if !(gpg > 0.0 && gpg.is_finite()) {
            return Err(Error::NumericFailure {
                rows: n,
                cols: n,
                what: "ellipsoid shape matrix lost positive definiteness",
            });
        }

        let step = pg / gpg.sqrt();
        x -= &step / (nf + 1.0);
        shape = (&shape - (&step * step.transpose()) * (2.0 / (nf + 1.0)))
            * (nf * nf / (nf * nf - 1.0));
        shape = (&shape + shape.transpose()) * 0.5;
        if shape.clone().cholesky().is_none() {
            return Err(Error::NumericFailure {
                rows: n,
                cols: n,
                what: "ellipsoid shape matrix lost positive definiteness",
            });
        }
    }

    if !best.value.is_finite() {
        return Err(Error::NumericFailure {
            rows: n,
            cols: n,
            what: "no feasible center found before the iteration limit",
        });
    }
    Ok(MinimizeResult {
        mu: best.mu,
        value: best.value,
        subgradient: best.subgradient,
        lower_bound: lower,
        iterations,
        converged,
        trace,
    })
}

fn bisect<F>(oracle: &mut F, opts: &MinimizeOptions) -> Result<MinimizeResult>
where
    F: FnMut(&[f64]) -> Result<OracleResponse>,
{
    let mut best = Best {
        value: f64::INFINITY,
        mu: opts.initial_mu.clone(),
        subgradient: vec![0.0],
    };
    let mut trace = Vec::new();
    let mut lo = 0.0_f64;
    let mut hi = opts.initial_mu[0].max(0.0) + opts.initial_radius;
    let mut iterations = 0;
    let mut converged = false;

    // Returns the sign of the derivative at `mu`: +1 means the optimum lies
    // below, -1 above, 0 exactly here.
    let mut probe = |mu: f64,
                     iteration: usize,
                     half_width: f64,
                     best: &mut Best,
                     trace: &mut Vec<DualState>|
     -> Result<f64> {
        let resp = oracle(&[mu])?;
        check_response(&resp, 1)?;
        let (kind, dir, value, s) = match resp {
            OracleResponse::Infeasible { cut } => (CutKind::Domain, cut[0], None, None),
            OracleResponse::Value { value, subgradient } => {
                best.offer(value, &[mu], &subgradient);
                (
                    CutKind::Objective,
                    subgradient[0],
                    Some(value),
                    Some(subgradient),
                )
            }
        };
        if opts.record_trace {
            trace.push(DualState {
                iteration,
                center: vec![mu],
                shape: DMatrix::from_element(1, 1, half_width * half_width),
                cut: kind,
                value,
                subgradient: s,
                best_value: best.value,
                best_mu: best.mu.clone(),
            });
        }
        Ok(dir.signum() * (dir != 0.0) as i32 as f64)
    };

    // Grow the bracket until the upper end has a nonnegative derivative.
    loop {
        iterations += 1;
        if probe(hi, iterations, hi - lo, &mut best, &mut trace)? >= 0.0 {
            break;
        }
        if iterations >= opts.max_iter || !hi.is_finite() {
            break;
        }
        lo = hi;
        hi *= 2.0;
    }

    while iterations < opts.max_iter {
        let width = hi - lo;
        let gap_bound = best.subgradient[0].abs() * width;
        if width <= 1e-13 * hi.max(1e-300)
            || (gap_bound <= opts.tol * 1e-6 && best.value.is_finite())
        {
            converged = true;
            break;
        }
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let dir = probe(mid, iterations, 0.5 * width, &mut best, &mut trace)?;
        if dir > 0.0 {
            hi = mid;
        } else if dir < 0.0 {
            lo = mid;
        } else {
            converged = true;
            break;
        }
    }
    if !best.value.is_finite() {
        return Err(Error::NumericFailure {
            rows: 1,
            cols: 1,
            what: "bisection found no point with a finite value",
        });
    }
    Ok(MinimizeResult {
        lower_bound: best.value - best.subgradient[0].abs() * (hi - lo),
        mu: best.mu,
        value: best.value,
        subgradient: best.subgradient,
        iterations,
        converged,
        trace,
    })
}

#[derive(Clone, Debug)]
pub struct RefineOptions {
    /// Stationarity target on the subgradient of positive coordinates.
    pub residual_tol: f64,
    pub max_newton: usize,
}

#[derive(Clone, Debug)]
pub struct Refined {
    pub mu: Vec<f64>,
    pub value: f64,
    pub subgradient: Vec<f64>,
    pub oracle_calls: usize,
}

/// Active-set Newton refinement of an approximate minimizer.
///
/// Coordinates are split into a free set (μ_a > 0) and a fixed set (μ_a = 0).
/// Newton steps with a finite-difference Hessian drive the free part of the
/// gradient to zero; coordinates that hit zero are fixed, fixed coordinates
/// with a negative gradient are freed. Returns `None` when the KKT conditions
/// cannot be met within the budget, in which case the caller keeps `start`.
pub fn refine<F>(mut oracle: F, start: &[f64], opts: &RefineOptions) -> Result<Option<Refined>>
where
    F: FnMut(&[f64]) -> Result<OracleResponse>,
{
    let n = start.len();
    let scale = start.iter().fold(0.0_f64, |m, &v| m.max(v));
    if scale <= 0.0 {
        return Ok(None);
    }
    let mut calls = 0;
    let mut eval = |mu: &[f64], calls: &mut usize| -> Result<Option<(f64, Vec<f64>)>> {
        *calls += 1;
        match oracle(mu)? {
            OracleResponse::Value { value, subgradient } => Ok(Some((value, subgradient))),
            OracleResponse::Infeasible { .. } => Ok(None),
        }
    };

    let mut free: Vec<bool> = start.iter().map(|&v| v > 1e-3 * scale).collect();
    let mut mu: Vec<f64> = start
        .iter()
        .zip(&free)
        .map(|(&v, &f)| if f { v } else { 0.0 })
        .collect();

    for _round in 0..2 * n + 2 {
        let Some((mut value, mut grad)) = eval(&mu, &mut calls)? else {
            return Ok(None);
        };
        for _ in 0..opts.max_newton {
            let idx: Vec<usize> = (0..n).filter(|&a| free[a]).collect();
            let residual = idx.iter().fold(0.0_f64, |m, &a| m.max(grad[a].abs()));
            if residual <= opts.residual_tol {
                break;
            }
            // Finite-difference Hessian on the free block.
            let m = idx.len();
            let mut hess = DMatrix::<f64>::zeros(m, m);
            for (c, &b) in idx.iter().enumerate() {
                let h = 1e-6 * mu[b].max(1e-9 * scale);
                let mut plus = mu.clone();
                plus[b] += h;
                let Some((_, gp)) = eval(&plus, &mut calls)? else {
                    return Ok(None);
                };
                let mut minus = mu.clone();
                minus[b] -= h;
                let column: Vec<f64> = if minus[b] > 0.0 {
                    match eval(&minus, &mut calls)? {
                        Some((_, gm)) => idx.iter().map(|&a| (gp[a] - gm[a]) / (2.0 * h)).collect(),
                        None => idx.iter().map(|&a| (gp[a] - grad[a]) / h).collect(),
                    }
                } else {
                    idx.iter().map(|&a| (gp[a] - grad[a]) / h).collect()
                };
                hess.set_column(c, &DVector::from_vec(column));
            }
            let hess = (&hess + hess.transpose()) * 0.5;
            let rhs = DVector::from_iterator(m, idx.iter().map(|&a| -grad[a]));
            let Some(step) = hess.clone().cholesky().map(|c| c.solve(&rhs)) else {
                return Ok(None);
            };
            let slope: f64 = idx.iter().zip(step.iter()).map(|(&a, d)| grad[a] * d).sum();

            let mut t_max: f64 = 1.0;
            for (&a, &d) in idx.iter().zip(step.iter()) {
                if d < 0.0 {
                    t_max = t_max.min(mu[a] / -d);
                }
            }
            let mut t = t_max;
            let mut accepted = None;
            for _ in 0..60 {
                let mut trial = mu.clone();
                for (&a, &d) in idx.iter().zip(step.iter()) {
                    let next = trial[a] + t * d;
                    trial[a] = if next > 1e-14 * scale { next } else { 0.0 };
                }
                if let Some((v, g)) = eval(&trial, &mut calls)? {
                    if v <= value + 1e-4 * t * slope || (v - value).abs() <= 1e-15 * value.abs() {
                        accepted = Some((trial, v, g));
                        break;
                    }
                }
                t *= 0.5;
            }
            let Some((trial, v, g)) = accepted else {
                break;
            };
            let stalled = (value - v).abs() <= 1e-15 * value.abs().max(1.0) && t < 1e-3;
            mu = trial;
            value = v;
            grad = g;
            if idx.iter().any(|&a| mu[a] == 0.0) || stalled {
                break;
            }
        }

        let mut changed = false;
        for a in 0..n {
            if free[a] && mu[a] == 0.0 {
                free[a] = false;
                changed = true;
            }
        }
        let top = mu.iter().fold(0.0_f64, |m, &v| m.max(v));
        for a in 0..n {
            if !free[a] && grad[a] < -opts.residual_tol {
                free[a] = true;
                mu[a] = 1e-3 * top.max(1e-12);
                changed = true;
            }
        }
        if changed {
            continue;
        }
        let residual = (0..n)
            .filter(|&a| free[a])
            .fold(0.0_f64, |m, a| m.max(grad[a].abs()));
        if residual <= opts.residual_tol {
            return Ok(Some(Refined {
                mu,
                value,
                subgradient: grad,
                oracle_calls: calls,
            }));
        }
        return Ok(None);
    }
    Ok(None)
}
