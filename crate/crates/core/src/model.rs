//! Shared domain types and the projection / likelihood primitives.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cgl::HStep;
use crate::error::{Error, Result};
use crate::linalg::{spd_logdet, symmetrize};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `n` observations (rows) of `p` variables (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() < 1 || values.ncols() < 2 {
            return Err(Error::Shape(format!(
                "data needs n >= 1 and p >= 2, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if let Some(pos) = values.iter().position(|x| !x.is_finite()) {
            let (i, j) = (pos % values.nrows(), pos / values.nrows());
            return Err(Error::Value(format!("non-finite entry at ({i}, {j})")));
        }
        Ok(Self { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    /// Rows at `idx`, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        Self::new(self.values.select_rows(idx.iter()))
    }
}

/// Symmetric `p × p` second-moment matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCovariance {
    values: DMatrix<f64>,
}

impl EmpiricalCovariance {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::Shape("covariance must be square".into()));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::Value("non-finite covariance entry".into()));
        }
        let p = values.nrows();
        for i in 0..p {
            if values[(i, i)] < 0.0 {
                return Err(Error::Value(format!("negative variance at {i}")));
            }
            for j in 0..i {
                let (a, b) = (values[(i, j)], values[(j, i)]);
                if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::Value(format!("covariance not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self {
            values: symmetrize(&values),
        })
    }

    pub(crate) fn from_raw(values: DMatrix<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn p(&self) -> usize {
        self.values.nrows()
    }
}

/// Non-negative `p × k` matrix mapping variables to nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterIndicator {
    values: DMatrix<f64>,
}

impl ClusterIndicator {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.ncols() == 0 || values.nrows() == 0 {
            return Err(Error::Shape("indicator must be non-empty".into()));
        }
        if values.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Value("indicator entries must be finite and >= 0".into()));
        }
        for i in 0..values.nrows() {
            if !values.row(i).iter().any(|&x| x > 0.0) {
                return Err(Error::Assignment { row: i });
            }
        }
        for j in 0..values.ncols() {
            if !(values.column(j).norm() > 0.0) {
                return Err(Error::Value(format!("indicator column {j} is zero")));
            }
        }
        Ok(Self { values })
    }

    pub(crate) fn from_raw(values: DMatrix<f64>) -> Self {
        Self { values }
    }

    /// Exact 0/1 indicator for a hard labelling.
    pub fn from_labels(labels: &[usize], k: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Value(format!("label {bad} out of range for k={k}")));
        }
        let mut h = DMatrix::zeros(labels.len(), k);
        for (i, &l) in labels.iter().enumerate() {
            h[(i, l)] = 1.0;
        }
        Self::new(h)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    pub fn k(&self) -> usize {
        self.values.ncols()
    }
}

/// Symmetric positive-definite node-level precision matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NodePrecision {
    values: DMatrix<f64>,
    pub sparsity_threshold: f64,
}

pub const DEFAULT_EDGE_THRESHOLD: f64 = 1e-4;

impl NodePrecision {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::Shape("precision must be square".into()));
        }
        let p = values.nrows();
        for i in 0..p {
            for j in 0..i {
                let (a, b) = (values[(i, j)], values[(j, i)]);
                if (a - b).abs() > 1e-10 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::Value(format!("precision not symmetric at ({i}, {j})")));
                }
            }
        }
        let values = symmetrize(&values);
        if spd_logdet(&values).is_none() {
            return Err(Error::NotPositiveDefinite("node precision".into()));
        }
        Ok(Self {
            values,
            sparsity_threshold: DEFAULT_EDGE_THRESHOLD,
        })
    }

    pub(crate) fn from_raw(values: DMatrix<f64>, sparsity_threshold: f64) -> Self {
        Self {
            values,
            sparsity_threshold,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.sparsity_threshold = threshold;
        self
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn k(&self) -> usize {
        self.values.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub phi: f64,
    pub h: ClusterIndicator,
    pub theta_star: NodePrecision,
}

/// Parameters of an `m`-component mixture plus fit diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureState {
    pub components: Vec<Component>,
    pub nll: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl MixtureState {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let state = Self {
            components,
            nll: f64::NAN,
            iterations: 0,
            converged: false,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn m(&self) -> usize {
        self.components.len()
    }

    pub fn k(&self) -> usize {
        self.components[0].theta_star.k()
    }

    pub fn p(&self) -> usize {
        self.components[0].h.p()
    }

    pub fn phi(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.phi).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::Value("mixture has no components".into()));
        }
        let k = self.components[0].theta_star.k();
        let p = self.components[0].h.p();
        for (j, c) in self.components.iter().enumerate() {
            if !(c.phi > 0.0 && c.phi <= 1.0) {
                return Err(Error::Value(format!("phi[{j}] = {} outside (0, 1]", c.phi)));
            }
            if c.theta_star.k() != k || c.h.k() != k || c.h.p() != p {
                return Err(Error::Shape(format!("component {j} has inconsistent dimensions")));
            }
        }
        let total: f64 = self.components.iter().map(|c| c.phi).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Value(format!("phi sums to {total}")));
        }
        Ok(())
    }
}

/// Row-stochastic `n × m` posterior weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponsibilityMatrix {
    values: DMatrix<f64>,
}

impl ResponsibilityMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        for i in 0..values.nrows() {
            let row = values.row(i);
            if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::Value(format!("responsibility row {i} has entry outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::Value(format!("responsibility row {i} sums to {s}")));
            }
        }
        Ok(Self { values })
    }

    pub(crate) fn from_raw(values: DMatrix<f64>) -> Self {
        Self { values }
    }

    pub fn uniform(n: usize, m: usize) -> Self {
        Self {
            values: DMatrix::from_element(n, m, 1.0 / m as f64),
        }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn m(&self) -> usize {
        self.values.ncols()
    }

    /// Row-wise argmax, ties to the lowest component.
    pub fn hard_labels(&self) -> Vec<usize> {
        (0..self.n())
            .map(|i| {
                let row = self.values.row(i);
                let mut best = 0;
                for j in 1..row.len() {
                    if row[j] > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

/// Numerical knobs shared by every solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// ℓ1 strength.
    pub lambda: f64,
    /// Cap on CGL alternations (and ONMtF sweeps).
    pub max_outer_iters: usize,
    /// Cap on graphical-lasso sweeps.
    pub max_inner_iters: usize,
    pub tol: f64,
    pub seed: u64,
    pub edge_threshold: f64,
    /// Whether the ℓ1 penalty also covers the diagonal of Θ.
    pub penalize_diagonal: bool,
    pub h_step: HStep,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            max_outer_iters: 100,
            max_inner_iters: 200,
            tol: 1e-6,
            seed: 0,
            edge_threshold: DEFAULT_EDGE_THRESHOLD,
            penalize_diagonal: true,
            h_step: HStep::Coherent,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Value(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Value(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_outer_iters < 1 || self.max_inner_iters < 1 {
            return Err(Error::Value("iteration caps must be >= 1".into()));
        }
        if !(self.edge_threshold > 0.0) {
            return Err(Error::Value("edge_threshold must be > 0".into()));
        }
        Ok(())
    }
}

/// `Y = X H`, i.e. row `i` of the result is `Hᵀxᵢ`.
pub fn project(x: &DataMatrix, h: &ClusterIndicator) -> Result<DMatrix<f64>> {
    if h.p() != x.p() {
        return Err(Error::Shape(format!(
            "indicator has {} rows but data has {} columns",
            h.p(),
            x.p()
        )));
    }
    Ok(x.values() * h.values())
}

/// `S = (1/n) XᵀX`, without centering.
pub fn empirical_covariance(x: &DataMatrix) -> Result<EmpiricalCovariance> {
    let v = x.values();
    if v.iter().any(|a| !a.is_finite()) {
        return Err(Error::Value("non-finite data".into()));
    }
    let s = v.tr_mul(v) / x.n() as f64;
    Ok(EmpiricalCovariance::from_raw(symmetrize(&s)))
}

/// Scales row `i` by `√(rᵢ/s)` with `s = Σ rᵢ`, so that `X̃ᵀX̃` is the
/// weighted covariance with unit total weight.
pub fn weighted_data(x: &DataMatrix, r_col: &[f64]) -> Result<DMatrix<f64>> {
    if r_col.len() != x.n() {
        return Err(Error::Shape(format!(
            "{} weights for {} observations",
            r_col.len(),
            x.n()
        )));
    }
    if r_col.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::Value("weights must be finite and >= 0".into()));
    }
    let s: f64 = r_col.iter().sum();
    if !(s > 0.0) {
        return Err(Error::EmptyComponent {
            component: 0,
            weight: s,
        });
    }
    let mut out = x.values().clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= (r_col[i] / s).sqrt();
    }
    Ok(out)
}

/// Weighted covariance `Σᵢ rᵢ xᵢxᵢᵀ / Σᵢ rᵢ`.
pub fn weighted_covariance(x: &DataMatrix, r_col: &[f64]) -> Result<EmpiricalCovariance> {
    let xt = weighted_data(x, r_col)?;
    Ok(EmpiricalCovariance::from_raw(symmetrize(&xt.tr_mul(&xt))))
}

/// `n × m` matrix of `log φⱼ + log N(Hⱼᵀxᵢ | 0, Θⱼ⁻¹)`.
pub fn component_log_densities(x: &DataMatrix, state: &MixtureState) -> Result<DMatrix<f64>> {
    let n = x.n();
    let mut out = DMatrix::zeros(n, state.m());
    for (j, c) in state.components.iter().enumerate() {
        let col = log_density(x, &c.h, &c.theta_star)?;
        let lp = c.phi.ln();
        for i in 0..n {
            out[(i, j)] = lp + col[i];
        }
    }
    Ok(out)
}

/// Per-row `log N(Hᵀxᵢ | 0, Θ⁻¹)`.
pub fn log_density(x: &DataMatrix, h: &ClusterIndicator, theta: &NodePrecision) -> Result<DVector<f64>> {
    let y = project(x, h)?;
    let th = theta.values();
    if th.nrows() != y.ncols() {
        return Err(Error::Shape("precision and indicator disagree on k".into()));
    }
    let logdet = spd_logdet(th)
        .ok_or_else(|| Error::NotPositiveDefinite("component precision".into()))?;
    let k = th.nrows() as f64;
    let yt = &y * th;
    let c = 0.5 * logdet - 0.5 * k * LN_2PI;
    Ok(DVector::from_fn(y.nrows(), |i, _| {
        c - 0.5 * yt.row(i).dot(&y.row(i))
    }))
}

/// Max-shifted log-sum-exp of each row.
pub fn row_logsumexp(l: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(l.nrows(), |i, _| {
        let row = l.row(i);
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !mx.is_finite() {
            return mx;
        }
        mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln()
    })
}

/// `−Σᵢ log Σⱼ φⱼ N(Hⱼᵀxᵢ | 0, Θⱼ⁻¹)`.
pub fn mixture_nll(x: &DataMatrix, state: &MixtureState) -> Result<f64> {
    let l = component_log_densities(x, state)?;
    Ok(-row_logsumexp(&l).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal, Uniform};

    fn randn(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng))
    }

    fn rand_pd(k: usize, seed: u64) -> DMatrix<f64> {
        let a = randn(k, k, seed);
        &a * a.transpose() / k as f64 + DMatrix::identity(k, k)
    }

    fn naive_matmul(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(a.nrows(), b.ncols());
        for i in 0..a.nrows() {
            for j in 0..b.ncols() {
                let mut s = 0.0;
                for l in 0..a.ncols() {
                    s += a[(i, l)] * b[(l, j)];
                }
                c[(i, j)] = s;
            }
        }
        c
    }

    fn single(h: DMatrix<f64>, theta: DMatrix<f64>) -> MixtureState {
        MixtureState::new(vec![Component {
            phi: 1.0,
            h: ClusterIndicator::new(h).unwrap(),
            theta_star: NodePrecision::new(theta).unwrap(),
        }])
        .unwrap()
    }

    #[test]
    fn project_identity_is_noop() {
        let x = DataMatrix::new(randn(5, 4, 1)).unwrap();
        let h = ClusterIndicator::new(DMatrix::identity(4, 4)).unwrap();
        assert_eq!(project(&x, &h).unwrap(), *x.values());
    }

    #[test]
    fn project_all_ones_sums() {
        let x = DataMatrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let h = ClusterIndicator::new(DMatrix::from_element(3, 1, 1.0)).unwrap();
        assert_eq!(project(&x, &h).unwrap()[(0, 0)], 6.0);
    }

    #[test]
    fn project_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = Uniform::new(0.01, 1.0).unwrap();
        let h = DMatrix::from_fn(4, 2, |_, _| u.sample(&mut rng));
        let x = DataMatrix::new(randn(3, 4, 8)).unwrap();
        let y = project(&x, &ClusterIndicator::new(h.clone()).unwrap()).unwrap();
        let oracle = naive_matmul(x.values(), &h);
        assert!(crate::linalg::max_abs_diff(&y, &oracle) < 1e-12);
    }

    #[test]
    fn project_rejects_mismatch() {
        let x = DataMatrix::new(randn(3, 4, 1)).unwrap();
        let h = ClusterIndicator::new(DMatrix::from_element(3, 1, 1.0)).unwrap();
        assert!(matches!(project(&x, &h), Err(Error::Shape(_))));
    }

    #[test]
    fn covariance_rank_one() {
        let x = DataMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let s = empirical_covariance(&x).unwrap();
        assert_eq!(*s.values(), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn covariance_symmetric_pair() {
        let x = DataMatrix::from_rows(&[vec![1.0, 1.0], vec![-1.0, -1.0]]).unwrap();
        let s = empirical_covariance(&x).unwrap();
        assert_eq!(*s.values(), DMatrix::from_element(2, 2, 1.0));
    }

    #[test]
    fn covariance_large_sample_near_identity() {
        let x = DataMatrix::new(randn(100, 5, 3)).unwrap();
        let s = empirical_covariance(&x).unwrap();
        let d = crate::linalg::max_abs_diff(s.values(), &DMatrix::identity(5, 5));
        assert!(d < 0.5, "max deviation {d}");
    }

    #[test]
    fn covariance_symmetric_and_psd() {
        let x = DataMatrix::new(randn(3, 6, 4)).unwrap();
        let s = empirical_covariance(&x).unwrap();
        assert_eq!(*s.values(), s.values().transpose());
        assert!(min_eigenvalue(s.values()) > -1e-10);
    }

    #[test]
    fn data_rejects_non_finite() {
        let mut v = randn(3, 3, 1);
        v[(1, 2)] = f64::NAN;
        assert!(matches!(DataMatrix::new(v), Err(Error::Value(_))));
    }

    #[test]
    fn weighted_uniform_reproduces_covariance() {
        let x = DataMatrix::new(randn(9, 4, 5)).unwrap();
        let xt = weighted_data(&x, &[1.0; 9]).unwrap();
        let s = empirical_covariance(&x).unwrap();
        assert!(crate::linalg::max_abs_diff(&xt.tr_mul(&xt), s.values()) < 1e-12);
    }

    #[test]
    fn weighted_single_observation() {
        let x = DataMatrix::new(randn(4, 3, 6)).unwrap();
        let xt = weighted_data(&x, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(xt.row(0), x.values().row(0));
        assert!(xt.rows(1, 3).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn weighted_outer_product_sum() {
        let x = DataMatrix::new(randn(2, 3, 9)).unwrap();
        let xt = weighted_data(&x, &[0.9, 0.1]).unwrap();
        let v = x.values();
        let mut oracle = DMatrix::zeros(3, 3);
        for (i, w) in [(0, 0.9), (1, 0.1)] {
            for a in 0..3 {
                for b in 0..3 {
                    oracle[(a, b)] += w * v[(i, a)] * v[(i, b)];
                }
            }
        }
        assert!(crate::linalg::max_abs_diff(&xt.tr_mul(&xt), &oracle) < 1e-12);
    }

    #[test]
    fn weighted_zero_mass_is_empty_component() {
        let x = DataMatrix::new(randn(2, 3, 9)).unwrap();
        assert!(matches!(
            weighted_data(&x, &[0.0, 0.0]),
            Err(Error::EmptyComponent { .. })
        ));
    }

    #[test]
    fn nll_standard_normal_at_mode() {
        // Data needs p >= 2, so the single node sums two zero variables.
        let x = DataMatrix::new(DMatrix::zeros(1, 2)).unwrap();
        let h = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let state = single(h, DMatrix::from_element(1, 1, 1.0));
        let nll = mixture_nll(&x, &state).unwrap();
        assert!((nll - 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
        assert!((nll - 0.9189).abs() < 1e-4);
    }

    #[test]
    fn nll_identical_components_collapse() {
        let x = DataMatrix::new(randn(6, 4, 11)).unwrap();
        let h = DMatrix::from_fn(4, 2, |i, j| if i % 2 == j { 1.0 } else { 0.2 });
        let th = rand_pd(2, 12);
        let one = single(h.clone(), th.clone());
        let comp = one.components[0].clone();
        let two = MixtureState::new(vec![
            Component { phi: 0.5, ..comp.clone() },
            Component { phi: 0.5, ..comp },
        ])
        .unwrap();
        let a = mixture_nll(&x, &one).unwrap();
        let b = mixture_nll(&x, &two).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    fn random_state(p: usize, k: usize, m: usize, seed: u64) -> MixtureState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Uniform::new(0.05, 1.0).unwrap();
        let w: Vec<f64> = (0..m).map(|_| u.sample(&mut rng)).collect();
        let tot: f64 = w.iter().sum();
        let comps = (0..m)
            .map(|j| Component {
                phi: w[j] / tot,
                h: ClusterIndicator::new(DMatrix::from_fn(p, k, |_, _| u.sample(&mut rng))).unwrap(),
                theta_star: NodePrecision::new(rand_pd(k, seed * 31 + j as u64)).unwrap(),
            })
            .collect();
        MixtureState::new(comps).unwrap()
    }

    #[test]
    fn nll_matches_naive_density_sum() {
        let x = DataMatrix::new(randn(10, 4, 21)).unwrap();
        let state = random_state(4, 2, 2, 22);
        let mut oracle = 0.0;
        for i in 0..10 {
            let xi = x.values().row(i).transpose();
            let mut dens = 0.0;
            for c in &state.components {
                let y = c.h.values().transpose() * &xi;
                let th = c.theta_star.values();
                let det = th.determinant();
                let q = (y.transpose() * th * &y)[(0, 0)];
                let k = th.nrows() as f64;
                dens += c.phi * det.sqrt() / (2.0 * std::f64::consts::PI).powf(k / 2.0) * (-0.5 * q).exp();
            }
            oracle -= dens.ln();
        }
        let nll = mixture_nll(&x, &state).unwrap();
        assert!((nll - oracle).abs() < 1e-10, "{nll} vs {oracle}");
    }

    #[test]
    fn nll_permutation_invariant() {
        let x = DataMatrix::new(randn(10, 4, 31)).unwrap();
        let mut state = random_state(4, 2, 3, 32);
        let a = mixture_nll(&x, &state).unwrap();
        state.components.rotate_left(1);
        let b = mixture_nll(&x, &state).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn nll_improves_with_owned_mle() {
        // With H = I and all data owned by the component, the Gaussian MLE is S⁻¹.
        let x = DataMatrix::new(randn(50, 3, 41)).unwrap();
        let s = empirical_covariance(&x).unwrap();
        let mle = crate::linalg::spd_inverse(s.values()).unwrap();
        let before = single(DMatrix::identity(3, 3), rand_pd(3, 42));
        let after = single(DMatrix::identity(3, 3), mle);
        assert!(mixture_nll(&x, &after).unwrap() <= mixture_nll(&x, &before).unwrap());
    }

    #[test]
    fn nll_rejects_non_pd() {
        let x = DataMatrix::new(randn(3, 2, 1)).unwrap();
        let mut state = single(DMatrix::identity(2, 2), DMatrix::identity(2, 2));
        state.components[0].theta_star =
            NodePrecision::from_raw(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]), 1e-4);
        assert!(matches!(mixture_nll(&x, &state), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn responsibility_validation() {
        assert!(ResponsibilityMatrix::new(DMatrix::from_row_slice(1, 2, &[0.3, 0.7])).is_ok());
        assert!(ResponsibilityMatrix::new(DMatrix::from_row_slice(1, 2, &[0.3, 0.6])).is_err());
    }

    #[test]
    fn indicator_rejects_zero_row() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(ClusterIndicator::new(h), Err(Error::Assignment { row: 1 })));
    }
}
