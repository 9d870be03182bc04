//! ℓ1-penalized Gaussian maximum likelihood (graphical lasso).
//!
//! Minimizes `−log det Θ + tr(SΘ) + λ‖Θ‖₁` by block-coordinate descent over
//! columns in the primal: for each column the off-diagonal block solves a
//! box-constrained quadratic program, after which the column of Θ is
//! updated in closed form. Every column step is an exact block minimization,
//! so the objective never increases and Θ stays positive definite.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{is_spd, l1_norm, spd_logdet, symmetrize};
use crate::model::{EmpiricalCovariance, NodePrecision, SolverSettings};

const RIDGE: f64 = 1e-8;
const QP_TOL: f64 = 1e-14;
const QP_MAX_PASSES: usize = 5000;

#[derive(Debug, Clone)]
pub struct GlassoProblem {
    pub s: EmpiricalCovariance,
    pub lambda: f64,
    pub settings: SolverSettings,
}

impl GlassoProblem {
    /// Problem at `settings.lambda`.
    pub fn new(s: EmpiricalCovariance, settings: SolverSettings) -> Self {
        Self {
            lambda: settings.lambda,
            s,
            settings,
        }
    }

    pub fn with_lambda(s: EmpiricalCovariance, lambda: f64, settings: SolverSettings) -> Self {
        Self { s, lambda, settings }
    }
}

#[derive(Debug, Clone)]
pub struct GlassoSolution {
    pub theta: NodePrecision,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after initialization followed by one entry per sweep.
    pub objective_trace: Vec<f64>,
}

pub fn glasso_solve(problem: &GlassoProblem) -> Result<GlassoSolution> {
    solve(problem.s.values(), problem.lambda, &problem.settings)
}

/// `−log det Θ + tr(SΘ) + λ‖Θ‖₁`; `+∞` when Θ is not positive definite.
pub fn glasso_objective(s: &DMatrix<f64>, theta: &DMatrix<f64>, lambda: f64, penalize_diagonal: bool) -> f64 {
    match spd_logdet(theta) {
        Some(ld) => -ld + s.component_mul(theta).sum() + lambda * l1_norm(theta, penalize_diagonal),
        None => f64::INFINITY,
    }
}

pub(crate) fn solve(s_in: &DMatrix<f64>, lambda: f64, settings: &SolverSettings) -> Result<GlassoSolution> {
    if !s_in.is_square() || s_in.nrows() == 0 {
        return Err(Error::Shape("glasso needs a non-empty square matrix".into()));
    }
    if s_in.iter().any(|x| !x.is_finite()) {
        return Err(Error::Value("non-finite covariance entry".into()));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Value(format!("lambda must be >= 0, got {lambda}")));
    }
    let p = s_in.nrows();
    let mut s = symmetrize(s_in);
    if !is_spd(&s) {
        if lambda == 0.0 {
            return Err(Error::NotPositiveDefinite(
                "covariance is singular and lambda = 0".into(),
            ));
        }
        for i in 0..p {
            s[(i, i)] += RIDGE;
        }
    }
    let dl = if settings.penalize_diagonal { lambda } else { 0.0 };

    let mut theta = DMatrix::zeros(p, p);
    for i in 0..p {
        let w = s[(i, i)] + dl;
        if !(w > 0.0) {
            return Err(Error::NotPositiveDefinite(format!("zero variance at {i} with no diagonal penalty")));
        }
        theta[(i, i)] = 1.0 / w;
    }
    // Dual variables of the per-column box QPs, kept across sweeps as warm starts.
    let mut gamma = DMatrix::from_fn(p, p, |i, j| (-s[(i, j)]).clamp(-lambda, lambda));

    let objective = |t: &DMatrix<f64>| glasso_objective(&s, t, lambda, settings.penalize_diagonal);
    let mut trace = vec![objective(&theta)];
    let mut converged = false;
    let mut iterations = 0;

    if p == 1 {
        converged = true;
    } else {
        let mut a = DMatrix::zeros(p - 1, p - 1);
        let mut s12 = DVector::zeros(p - 1);
        let mut u = DVector::zeros(p - 1);
        for sweep in 1..=settings.max_inner_iters {
            iterations = sweep;
            let mut change: f64 = 0.0;
            for j in 0..p {
                let others = |t: usize| if t < j { t } else { t + 1 };
                for c in 0..p - 1 {
                    let oc = others(c);
                    s12[c] = s[(oc, j)];
                    u[c] = s12[c] + gamma[(oc, j)];
                    for r in 0..p - 1 {
                        a[(r, c)] = theta[(others(r), oc)];
                    }
                }
                box_qp(&a, &s12, lambda, &mut u);
                let au = &a * &u;
                let w22 = s[(j, j)] + dl;
                for c in 0..p - 1 {
                    let oc = others(c);
                    gamma[(oc, j)] = u[c] - s12[c];
                    let v = -au[c] / w22;
                    change = change.max((v - theta[(oc, j)]).abs());
                    theta[(oc, j)] = v;
                    theta[(j, oc)] = v;
                }
                let v = 1.0 / w22 + u.dot(&au) / (w22 * w22);
                change = change.max((v - theta[(j, j)]).abs());
                theta[(j, j)] = v;
            }
            trace.push(objective(&theta));
            if change < settings.tol {
                converged = true;
                break;
            }
        }
    }

    let obj = *trace.last().unwrap();
    if !obj.is_finite() {
        return Err(Error::NotPositiveDefinite("glasso iterate lost definiteness".into()));
    }
    Ok(GlassoSolution {
        theta: NodePrecision::from_raw(theta, settings.edge_threshold),
        objective: obj,
        iterations,
        converged,
        objective_trace: trace,
    })
}

/// Coordinate descent for `min uᵀAu` over the box `|u − s12|∞ ≤ λ`.
/// `u` holds the warm start on entry and the solution on exit.
fn box_qp(a: &DMatrix<f64>, s12: &DVector<f64>, lambda: f64, u: &mut DVector<f64>) {
    let q = u.len();
    if lambda == 0.0 {
        u.copy_from(s12);
        return;
    }
    for c in 0..q {
        u[c] = u[c].clamp(s12[c] - lambda, s12[c] + lambda);
    }
    let mut au = a * &*u;
    for _ in 0..QP_MAX_PASSES {
        let mut delta: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for l in 0..q {
            let all = a[(l, l)];
            let rest = au[l] - all * u[l];
            let target = (-rest / all).clamp(s12[l] - lambda, s12[l] + lambda);
            let d = target - u[l];
            if d != 0.0 {
                au.axpy(d, &a.column(l), 1.0);
                u[l] = target;
                delta = delta.max(d.abs());
            }
            scale = scale.max(target.abs());
        }
        if delta <= QP_TOL * (1.0 + scale) {
            break;
        }
    }
}

/// Undirected edges `(i, j)`, `i < j`, with `|θᵢⱼ|` above the threshold.
pub fn edge_set(theta: &NodePrecision) -> BTreeSet<(usize, usize)> {
    edges_above(theta.values(), theta.sparsity_threshold)
}

pub fn edges_above(m: &DMatrix<f64>, threshold: f64) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for j in 0..m.ncols() {
        for i in 0..j {
            if m[(i, j)].abs() > threshold {
                out.insert((i, j));
            }
        }
    }
    out
}
