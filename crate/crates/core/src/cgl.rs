//! Coherent graphical lasso: joint node discovery and node-level sparse
//! precision estimation for a single state.
//!
//! Minimizes `−log det Θ + tr(HᵀS̃HΘ) + λ‖Θ‖₁` over `Θ ≻ 0` and `H ≥ 0`
//! with unit-norm columns, alternating a graphical lasso on `HᵀS̃H` with a
//! multiplicative update of `H`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glasso::{self, glasso_objective};
use crate::kmeans::kmeans_maximin;
use crate::linalg::{abs_correlation, format_matrix, max_abs_diff, neg_part, pos_part, symmetrize};
use crate::model::{ClusterIndicator, DataMatrix, EmpiricalCovariance, NodePrecision, SolverSettings};

const FLOOR: f64 = 1e-12;
const INIT_OFFSET: f64 = 0.2;

/// How `H` moves between graphical-lasso solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HStep {
    /// The multiplicative rule of [`h_update`] applied to `(S̃, Θ)` as written.
    Descent,
    /// The same rule applied to `(|S̃|, −Θ)`: grows `H` along coherent
    /// (same-sign, strongly linked) variable groups.
    #[default]
    Coherent,
    /// `H` is held fixed.
    Frozen,
}

#[derive(Debug, Clone)]
pub struct CglSolution {
    pub h: ClusterIndicator,
    pub theta_star: NodePrecision,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective at the start point followed by one entry per alternation.
    pub objective_trace: Vec<f64>,
    /// `‖HᵀH − I‖_F` at return.
    pub orthogonality_defect: f64,
}

/// One multiplicative step on `H` given `X̃` (rows are weighted observations).
pub fn h_update(h: &DMatrix<f64>, x_tilde: &DMatrix<f64>, theta_star: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    h_update_cov(h, &x_tilde.tr_mul(x_tilde), theta_star)
}

/// `H ∘ (S̃HΘ⁻ + Hλ₁⁻) / (S̃HΘ⁺ + Hλ₁⁺)` with `λ₁ = −HᵀS̃HΘ`.
///
/// `S̃` is split as `S̃⁺ − S̃⁻` so that both sides of the ratio stay
/// non-negative: `S̃HΘ⁻` reads `S̃⁺HΘ⁻ + S̃⁻HΘ⁺` and `S̃HΘ⁺` reads
/// `S̃⁺HΘ⁺ + S̃⁻HΘ⁻`. For entrywise non-negative `S̃` this is the rule as
/// written.
pub fn h_update_cov(h: &DMatrix<f64>, s: &DMatrix<f64>, theta_star: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (p, k) = h.shape();
    if s.shape() != (p, p) || theta_star.shape() != (k, k) {
        return Err(Error::Shape(format!(
            "h_update: H {p}x{k}, S {:?}, Θ {:?}",
            s.shape(),
            theta_star.shape()
        )));
    }
    let lambda1 = -(h.tr_mul(&(s * h)) * theta_star);
    let (tp, tn) = (pos_part(theta_star), neg_part(theta_star));
    let sph = pos_part(s) * h;
    let snh = neg_part(s) * h;
    let num = &sph * &tn + &snh * &tp + h * neg_part(&lambda1);
    let den = &sph * &tp + &snh * &tn + h * pos_part(&lambda1);
    let out = DMatrix::from_fn(p, k, |i, j| h[(i, j)] * (num[(i, j)] / den[(i, j)].max(FLOOR)));
    if out.iter().any(|x| x.is_nan()) {
        return Err(Error::Numerical {
            message: "NaN in multiplicative H update".into(),
            dump: format!("H =\n{}Θ* =\n{}", format_matrix(h), format_matrix(theta_star)),
        });
    }
    Ok(out)
}

/// Scales `H` to unit-norm columns and `Θ` by the inverse scaling, so that
/// `(HᵀX)ᵀΘ(HᵀX)` is unchanged. Zero columns are left alone.
pub fn renormalize(h: &DMatrix<f64>, theta: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let d: Vec<f64> = h
        .column_iter()
        .map(|c| {
            let n = c.norm();
            if n > 0.0 { n } else { 1.0 }
        })
        .collect();
    let hn = DMatrix::from_fn(h.nrows(), h.ncols(), |i, j| h[(i, j)] / d[j]);
    let tn = DMatrix::from_fn(theta.nrows(), theta.ncols(), |i, j| theta[(i, j)] * d[i] * d[j]);
    (hn, tn)
}

/// `−log det Θ + tr(HᵀS̃HΘ) + λ‖Θ‖₁`.
pub fn cgl_objective(s: &DMatrix<f64>, h: &DMatrix<f64>, theta: &DMatrix<f64>, settings: &SolverSettings) -> f64 {
    glasso_objective(&node_covariance(s, h), theta, settings.lambda, settings.penalize_diagonal)
}

/// `S* = HᵀS̃H`, symmetrized.
pub fn node_covariance(s: &DMatrix<f64>, h: &DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&h.tr_mul(&(s * h)))
}

/// k-means (farthest-point seeding) on the rows of `|corr(S)|`, as a 0/1
/// indicator plus a constant offset so every entry is strictly positive.
pub fn initial_indicator(s: &DMatrix<f64>, k: usize) -> Result<ClusterIndicator> {
    let p = s.nrows();
    if k == 0 || k > p {
        return Err(Error::InvalidK { k, p });
    }
    let labels = kmeans_maximin(&abs_correlation(s), k);
    let mut h = DMatrix::from_element(p, k, INIT_OFFSET);
    for (i, &l) in labels.iter().enumerate() {
        h[(i, l)] += 1.0;
    }
    Ok(ClusterIndicator::from_raw(h))
}

pub(crate) fn solve_theta(s: &DMatrix<f64>, h: &DMatrix<f64>, settings: &SolverSettings) -> Result<DMatrix<f64>> {
    let sol = glasso::solve(&node_covariance(s, h), settings.lambda, settings)?;
    Ok(sol.theta.values().clone())
}

/// Moves `H` once according to `settings.h_step` and renormalizes it.
pub(crate) fn step_h(s: &DMatrix<f64>, h: &DMatrix<f64>, theta: &DMatrix<f64>, step: HStep) -> Result<DMatrix<f64>> {
    let moved = match step {
        HStep::Frozen => return Ok(h.clone()),
        HStep::Descent => h_update_cov(h, s, theta)?,
        HStep::Coherent => h_update_cov(h, &s.abs(), &(-theta))?,
    };
    Ok(renormalize(&moved, theta).0)
}

/// One alternation from `h`: returns `(Θ for h, new H, Θ for new H)`.
pub(crate) fn sweep(
    s: &DMatrix<f64>,
    h: &DMatrix<f64>,
    settings: &SolverSettings,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let theta = solve_theta(s, h, settings)?;
    let hn = step_h(s, h, &theta, settings.h_step)?;
    let tn = solve_theta(s, &hn, settings)?;
    Ok((theta, hn, tn))
}

/// Coherent graphical lasso from `X̃` (rows are weighted observations, so
/// `S̃ = X̃ᵀX̃`).
pub fn cgl_solve(
    x_tilde: &DMatrix<f64>,
    k: usize,
    settings: &SolverSettings,
    h_init: &ClusterIndicator,
    theta_init: &NodePrecision,
) -> Result<CglSolution> {
    if x_tilde.iter().any(|x| !x.is_finite()) {
        return Err(Error::Value("non-finite weighted data".into()));
    }
    let s = symmetrize(&x_tilde.tr_mul(x_tilde));
    cgl_solve_cov(&EmpiricalCovariance::from_raw(s), k, settings, h_init, theta_init)
}

/// [`cgl_solve`] on a precomputed `S̃`.
pub fn cgl_solve_cov(
    s: &EmpiricalCovariance,
    k: usize,
    settings: &SolverSettings,
    h_init: &ClusterIndicator,
    theta_init: &NodePrecision,
) -> Result<CglSolution> {
    settings.validate()?;
    let s = s.values();
    let p = s.nrows();
    if h_init.p() != p || h_init.k() != k || theta_init.k() != k {
        return Err(Error::Shape(format!(
            "cgl: S is {p}x{p}, H_init {}x{}, Θ_init {}x{}, k={k}",
            h_init.p(),
            h_init.k(),
            theta_init.k(),
            theta_init.k()
        )));
    }
    let mut trace = vec![cgl_objective(s, h_init.values(), theta_init.values(), settings)];
    let mut h = match settings.h_step {
        HStep::Frozen => h_init.values().clone(),
        _ => renormalize(h_init.values(), theta_init.values()).0,
    };
    let mut theta = solve_theta(s, &h, settings)?;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=settings.max_outer_iters {
        iterations = it;
        let hn = step_h(s, &h, &theta, settings.h_step)?;
        let tn = solve_theta(s, &hn, settings)?;
        let dh = max_abs_diff(&hn, &h);
        let dt = max_abs_diff(&tn, &theta);
        h = hn;
        theta = tn;
        trace.push(cgl_objective(s, &h, &theta, settings));
        if dh < settings.tol && dt < settings.tol {
            converged = true;
            break;
        }
    }
    let mut g = h.tr_mul(&h);
    for i in 0..k {
        g[(i, i)] -= 1.0;
    }
    Ok(CglSolution {
        objective: *trace.last().unwrap(),
        h: ClusterIndicator::from_raw(h),
        theta_star: NodePrecision::from_raw(theta, settings.edge_threshold),
        iterations,
        converged,
        objective_trace: trace,
        orthogonality_defect: g.norm(),
    })
}

/// Standalone CGL on raw data: `S̃ = (1/n)XᵀX`, profile k-means start, and
/// `Θ_init` from the graphical lasso at that start.
pub fn cgl_fit(x: &DataMatrix, k: usize, settings: &SolverSettings) -> Result<CglSolution> {
    let s = crate::model::empirical_covariance(x)?;
    cgl_fit_cov(&s, k, settings)
}

pub fn cgl_fit_cov(s: &EmpiricalCovariance, k: usize, settings: &SolverSettings) -> Result<CglSolution> {
    let h0 = initial_indicator(s.values(), k)?;
    let t0 = glasso::solve(&node_covariance(s.values(), h0.values()), settings.lambda, settings)?;
    cgl_solve_cov(s, k, settings, &h0, &t0.theta)
}
