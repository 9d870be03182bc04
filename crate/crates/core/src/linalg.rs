//! Small dense helpers shared by the solvers.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    DMatrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

/// Log-determinant of a symmetric positive-definite matrix via Cholesky.
///
/// Returns `None` when the factorization fails, which is how this crate
/// defines "not positive definite".
pub fn spd_logdet(a: &DMatrix<f64>) -> Option<f64> {
    let chol = a.clone().cholesky()?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        let d = l[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        acc += d.ln();
    }
    Some(2.0 * acc)
}

pub fn is_spd(a: &DMatrix<f64>) -> bool {
    spd_logdet(a).is_some()
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    symmetrize(a)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// `A⁺ = (|A| + A) / 2`.
pub fn pos_part(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.map(|x| 0.5 * (x.abs() + x))
}

/// `A⁻ = (|A| - A) / 2`.
pub fn neg_part(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.map(|x| 0.5 * (x.abs() - x))
}

/// Entrywise `|C|` where `C` is the correlation matrix of `s`.
///
/// Zero-variance variables get a zero profile apart from a unit diagonal.
pub fn abs_correlation(s: &DMatrix<f64>) -> DMatrix<f64> {
    let p = s.nrows();
    let d: Vec<f64> = (0..p).map(|i| s[(i, i)].max(0.0).sqrt()).collect();
    DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else if d[i] > 0.0 && d[j] > 0.0 {
            (s[(i, j)] / (d[i] * d[j])).abs()
        } else {
            0.0
        }
    })
}

/// Inverse of an SPD matrix through its Cholesky factor.
pub fn spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("inverse requested".into()))?;
    Ok(symmetrize(&chol.inverse()))
}

/// Sum of absolute values, optionally skipping the diagonal.
pub fn l1_norm(a: &DMatrix<f64>, include_diagonal: bool) -> f64 {
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if include_diagonal || i != j {
                acc += a[(i, j)].abs();
            }
        }
    }
    acc
}

pub fn format_matrix(a: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols()).map(|j| format!("{:.6e}", a[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}
