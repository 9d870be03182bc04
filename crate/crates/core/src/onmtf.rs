//! Orthogonal non-negative matrix tri-factorization of an absolute covariance.
//!
//! Fits `|Σ| ≈ H M Hᵀ` with `H ≥ 0`. `H` follows the orthogonal multiplicative
//! rule `H ← H ∘ √(AHM / (HHᵀAHM))`; the middle factor is the least-squares
//! optimum for the current `H`. A step that would raise the residual is
//! damped towards the previous iterate, so the residual never increases.

use nalgebra::DMatrix;

use crate::cgl::initial_indicator;
use crate::error::{Error, Result};
use crate::linalg::max_abs_diff;
use crate::model::{ClusterIndicator, EmpiricalCovariance, SolverSettings};

const FLOOR: f64 = 1e-12;
const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone)]
pub struct OnmtfSolution {
    pub h: ClusterIndicator,
    pub s_mid: DMatrix<f64>,
    /// Final `‖|Σ| − H S_mid Hᵀ‖²_F`.
    pub residual: f64,
    pub iterations: usize,
    pub residual_trace: Vec<f64>,
    /// `‖HᵀH − diag(HᵀH)‖_F` per sweep.
    pub orthogonality_trace: Vec<f64>,
}

/// Least-squares middle factor `(HᵀH)⁻¹ HᵀAH (HᵀH)⁻¹`; equals `HᵀAH` for orthonormal `H`.
pub fn middle_factor(h: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    let g = h.tr_mul(h);
    let hah = h.tr_mul(&(a * h));
    let ginv = match g.clone().cholesky() {
        Some(c) => c.inverse(),
        None => g.pseudo_inverse(1e-12).unwrap_or_else(|_| DMatrix::zeros(h.ncols(), h.ncols())),
    };
    &ginv * hah * &ginv
}

fn residual(a: &DMatrix<f64>, h: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
    (a - h * m * h.transpose()).norm_squared()
}

pub fn orthogonality_defect(h: &DMatrix<f64>) -> f64 {
    let mut g = h.tr_mul(h);
    g.fill_diagonal(0.0);
    g.norm()
}

pub fn onmtf_solve(sigma: &EmpiricalCovariance, k: usize, settings: &SolverSettings) -> Result<OnmtfSolution> {
    let p = sigma.p();
    if k == 0 || k > p {
        return Err(Error::InvalidK { k, p });
    }
    let a = sigma.values().abs();
    let mut h = initial_indicator(sigma.values(), k)?.values().clone();
    for mut col in h.column_iter_mut() {
        let nrm = col.norm();
        col /= nrm;
    }
    let mut m = middle_factor(&h, &a);
    let mut obj = residual(&a, &h, &m);
    let mut trace = vec![obj];
    let mut ortho = vec![orthogonality_defect(&h)];
    let mut iterations = 0;

    for it in 1..=settings.max_inner_iters {
        iterations = it;
        let ah = &a * &h;
        let mu = h.tr_mul(&ah);
        let num = &ah * &mu;
        let den = &h * (h.tr_mul(&ah) * &mu);
        let cand = DMatrix::from_fn(p, k, |i, j| {
            h[(i, j)] * (num[(i, j)].max(0.0) / den[(i, j)].max(FLOOR)).sqrt()
        });
        let mut accepted = None;
        let mut alpha = 1.0;
        for _ in 0..MAX_HALVINGS {
            let trial = &h + (&cand - &h) * alpha;
            let tm = middle_factor(&trial, &a);
            let tobj = residual(&a, &trial, &tm);
            if tobj <= obj {
                accepted = Some((trial, tm, tobj));
                break;
            }
            alpha *= 0.5;
        }
        let Some((nh, nm, nobj)) = accepted else { break };
        let change = max_abs_diff(&nh, &h);
        h = nh;
        m = nm;
        obj = nobj;
        trace.push(obj);
        ortho.push(orthogonality_defect(&h));
        if change < settings.tol {
            break;
        }
    }

    Ok(OnmtfSolution {
        h: ClusterIndicator::from_raw(h),
        s_mid: m,
        residual: obj,
        iterations,
        residual_trace: trace,
        orthogonality_trace: ortho,
    })
}

/// Row-wise argmax of `H`, ties to the lowest column.
pub fn cluster_assign(h: &ClusterIndicator) -> Result<Vec<usize>> {
    argmax_rows(h.values(), true)
}

/// Row argmax; with `strict`, an all-zero (or non-positive) row is an error,
/// otherwise it maps to column 0.
pub(crate) fn argmax_rows(h: &DMatrix<f64>, strict: bool) -> Result<Vec<usize>> {
    (0..h.nrows())
        .map(|i| {
            let row = h.row(i);
            let mut best = 0;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            if strict && !(row[best] > 0.0) {
                return Err(Error::Assignment { row: i });
            }
            Ok(best)
        })
        .collect()
}
