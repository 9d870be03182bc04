//! Mixture of coherent graphical lasso models fit by EM.
//!
//! Each component `j` owns a weight `φⱼ`, an indicator `Hⱼ` and a node
//! precision `Θ*ⱼ`; observation `xᵢ` has density `N(Hⱼᵀxᵢ | 0, Θ*ⱼ⁻¹)`
//! under component `j`. Every EM iteration runs the M-step from the current
//! responsibilities (one CGL alternation per component, or a full CGL solve
//! when requested), records the mixture NLL, and then recomputes the
//! responsibilities.

use std::cmp::Ordering;

use log::warn;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cgl::{cgl_fit_cov, cgl_solve_cov, solve_theta, sweep, CglSolution};
use crate::error::{Error, Result};
use crate::model::{
    component_log_densities, empirical_covariance, log_density, mixture_nll, weighted_covariance, ClusterIndicator,
    Component, DataMatrix, MixtureState, NodePrecision, ResponsibilityMatrix, SolverSettings,
};

const MAJOR_WEIGHT: f64 = 0.9;
const MINOR_TOTAL: f64 = 0.1;
const EMPTY_FRACTION: f64 = 1e-3;
const MAX_RESTARTS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum InitScheme {
    /// Each row gets 0.9 on a uniformly drawn component, the rest spread evenly.
    RandomResponsibility,
    UserSupplied(ResponsibilityMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MnglConfig {
    pub m: usize,
    pub k: usize,
    pub settings: SolverSettings,
    pub init_scheme: InitScheme,
    /// Cap on EM iterations.
    pub max_em_iters: usize,
    /// Solve every component's CGL subproblem to convergence in each M-step
    /// instead of taking a single alternation.
    pub full_m_step: bool,
    /// Keep a component's previous `(H, Θ*)` when the update lowers its
    /// responsibility-weighted log-likelihood, which makes the NLL trace
    /// non-increasing.
    pub safeguard: bool,
    /// Independent random starts; the fit with the lowest final NLL is kept.
    pub n_init: usize,
}

impl MnglConfig {
    pub fn new(m: usize, k: usize, settings: SolverSettings) -> Self {
        Self {
            m,
            k,
            settings,
            init_scheme: InitScheme::RandomResponsibility,
            max_em_iters: 50,
            full_m_step: false,
            safeguard: true,
            n_init: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 1 || self.k < 1 {
            return Err(Error::Value(format!("need m >= 1 and k >= 1, got m={}, k={}", self.m, self.k)));
        }
        if self.n_init < 1 {
            return Err(Error::Value("n_init must be >= 1".into()));
        }
        if self.max_em_iters < 1 {
            return Err(Error::Value("max_em_iters must be >= 1".into()));
        }
        self.settings.validate()
    }
}

#[derive(Debug, Clone)]
pub struct MnglResult {
    pub state: MixtureState,
    pub responsibilities: ResponsibilityMatrix,
    /// Mixture NLL after every EM iteration.
    pub nll_trace: Vec<f64>,
    /// Components re-seeded after collapsing.
    pub restarts: usize,
}

fn random_responsibilities(n: usize, m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    if m == 1 {
        return DMatrix::from_element(n, 1, 1.0);
    }
    let minor = MINOR_TOTAL / (m - 1) as f64;
    let mut r = DMatrix::from_element(n, m, minor);
    for i in 0..n {
        r[(i, rng.random_range(0..m))] = MAJOR_WEIGHT;
    }
    r
}

fn whole_sample_fit(x: &DataMatrix, config: &MnglConfig) -> Result<CglSolution> {
    config.validate()?;
    if x.n() <= config.k {
        return Err(Error::Value(format!("need n > k, got n={}, k={}", x.n(), config.k)));
    }
    cgl_fit_cov(&empirical_covariance(x)?, config.k, &config.settings)
}

fn initialize_with_rng(
    x: &DataMatrix,
    config: &MnglConfig,
    whole: &CglSolution,
    rng: &mut ChaCha8Rng,
) -> Result<(MixtureState, ResponsibilityMatrix)> {
    let m = config.m;
    let r = match &config.init_scheme {
        InitScheme::RandomResponsibility => ResponsibilityMatrix::from_raw(random_responsibilities(x.n(), m, rng)),
        InitScheme::UserSupplied(r) => {
            if r.n() != x.n() || r.m() != m {
                return Err(Error::Shape(format!(
                    "initial responsibilities are {}x{}, expected {}x{m}",
                    r.n(),
                    r.m(),
                    x.n()
                )));
            }
            r.clone()
        }
    };
    let component = Component {
        phi: 1.0 / m as f64,
        h: whole.h.clone(),
        theta_star: whole.theta_star.clone(),
    };
    let mut state = MixtureState {
        components: vec![component; m],
        nll: f64::NAN,
        iterations: 0,
        converged: whole.converged,
    };
    state.nll = mixture_nll(x, &state)?;
    Ok((state, r))
}

/// Random 0.9 / 0.1/(m−1) responsibilities, uniform `φ`, and every component
/// set to the CGL solution on the whole sample.
pub fn initialize(x: &DataMatrix, config: &MnglConfig) -> Result<(MixtureState, ResponsibilityMatrix)> {
    let whole = whole_sample_fit(x, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.settings.seed);
    initialize_with_rng(x, config, &whole, &mut rng)
}

/// Posterior component probabilities, computed in the log domain.
pub fn e_step(x: &DataMatrix, state: &MixtureState) -> Result<ResponsibilityMatrix> {
    let l = component_log_densities(x, state)?;
    let (n, m) = l.shape();
    let mut r = DMatrix::zeros(n, m);
    for i in 0..n {
        let row = l.row(i);
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !mx.is_finite() {
            warn!("row {i}: every component density underflowed; using uniform responsibilities");
            r.row_mut(i).fill(1.0 / m as f64);
            continue;
        }
        let w: Vec<f64> = row.iter().map(|v| (v - mx).exp()).collect();
        let tot: f64 = w.iter().sum();
        for j in 0..m {
            r[(i, j)] = w[j] / tot;
        }
    }
    Ok(ResponsibilityMatrix::from_raw(r))
}

/// `φⱼ = (1/n) Σᵢ rᵢⱼ`.
pub fn m_step_phi(r: &ResponsibilityMatrix) -> Vec<f64> {
    let n = r.n() as f64;
    r.values().column_iter().map(|c| c.sum() / n).collect()
}

/// Re-estimates every component's `(Hⱼ, Θ*ⱼ)` on its responsibility-weighted
/// covariance, warm-started from `state`, and `φ` from `r`.
pub fn m_step_networks(
    x: &DataMatrix,
    r: &ResponsibilityMatrix,
    state: &MixtureState,
    config: &MnglConfig,
) -> Result<MixtureState> {
    if r.n() != x.n() || r.m() != state.m() {
        return Err(Error::Shape("responsibilities do not match data and state".into()));
    }
    let phi = m_step_phi(r);
    let floor = EMPTY_FRACTION * x.n() as f64;
    for (j, &f) in phi.iter().enumerate() {
        let s = f * x.n() as f64;
        if s < floor {
            return Err(Error::EmptyComponent { component: j, weight: s });
        }
    }
    let components = state
        .components
        .par_iter()
        .enumerate()
        .map(|(j, c)| {
            let col: Vec<f64> = r.values().column(j).iter().cloned().collect();
            let s = weighted_covariance(x, &col)?;
            let wrap = |h: DMatrix<f64>, t: DMatrix<f64>| {
                (
                    ClusterIndicator::from_raw(h),
                    NodePrecision::from_raw(t, config.settings.edge_threshold),
                )
            };
            let (fixed_h, full) = if config.full_m_step {
                let sol = cgl_solve_cov(&s, config.k, &config.settings, &c.h, &c.theta_star)?;
                (solve_theta(s.values(), c.h.values(), &config.settings)?, (sol.h, sol.theta_star))
            } else {
                let (t0, h, t) = sweep(s.values(), c.h.values(), &config.settings)?;
                (t0, wrap(h, t))
            };
            let (h, theta) = if config.safeguard {
                let base = weighted_log_likelihood(x, &col, &c.h, &c.theta_star)?;
                let fixed = wrap(c.h.values().clone(), fixed_h);
                [full, fixed]
                    .into_iter()
                    .map(|(h, t)| Ok((weighted_log_likelihood(x, &col, &h, &t)? >= base, (h, t))))
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .find(|(ok, _)| *ok)
                    .map_or_else(|| (c.h.clone(), c.theta_star.clone()), |(_, ht)| ht)
            } else {
                full
            };
            Ok(Component {
                phi: phi[j],
                h,
                theta_star: theta,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MixtureState {
        components,
        nll: f64::NAN,
        iterations: state.iterations,
        converged: false,
    })
}

fn weighted_log_likelihood(x: &DataMatrix, w: &[f64], h: &ClusterIndicator, theta: &NodePrecision) -> Result<f64> {
    Ok(log_density(x, h, theta)?.iter().zip(w).map(|(l, r)| r * l).sum())
}

fn reseed_column(r: &mut DMatrix<f64>, j: usize, rng: &mut ChaCha8Rng) {
    let (n, m) = r.shape();
    let minor = MINOR_TOTAL / (m - 1) as f64;
    for i in 0..n {
        r[(i, j)] = if rng.random_range(0..m) == j { MAJOR_WEIGHT } else { minor };
        let tot: f64 = r.row(i).sum();
        for c in 0..m {
            r[(i, c)] /= tot;
        }
    }
}

fn lexicographic(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

/// Orders components by descending `φ`, ties by the entries of `Θ*`, and
/// permutes the responsibility columns to match.
fn canonical_order(state: &mut MixtureState, r: &mut DMatrix<f64>) {
    let mut order: Vec<usize> = (0..state.m()).collect();
    order.sort_by(|&a, &b| {
        let (ca, cb) = (&state.components[a], &state.components[b]);
        cb.phi
            .partial_cmp(&ca.phi)
            .unwrap_or(Ordering::Equal)
            .then_with(|| lexicographic(ca.theta_star.values(), cb.theta_star.values()))
    });
    state.components = order.iter().map(|&j| state.components[j].clone()).collect();
    *r = r.select_columns(order.iter());
}

/// Runs EM from `n_init` random starts (start `t` draws from stream `t` of
/// the seeded generator) and keeps the lowest final NLL, earliest start on
/// ties.
pub fn mngl_fit(x: &DataMatrix, config: &MnglConfig) -> Result<MnglResult> {
    let whole = whole_sample_fit(x, config)?;
    let starts = match config.init_scheme {
        _ if config.m == 1 => 1,
        InitScheme::UserSupplied(_) => 1,
        InitScheme::RandomResponsibility => config.n_init,
    };
    let fits = (0..starts)
        .into_par_iter()
        .map(|t| fit_from(x, config, &whole, t as u64))
        .collect::<Vec<_>>();
    let mut best: Option<MnglResult> = None;
    let mut first_err = None;
    for fit in fits {
        match fit {
            Ok(f) => {
                if best.as_ref().is_none_or(|b| f.state.nll < b.state.nll) {
                    best = Some(f);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.unwrap_or_else(|| Error::Fit("no EM start ran".into())))
}

fn fit_from(x: &DataMatrix, config: &MnglConfig, whole: &CglSolution, start: u64) -> Result<MnglResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.settings.seed);
    rng.set_stream(start);
    let (mut state, r) = initialize_with_rng(x, config, whole, &mut rng)?;
    if config.m == 1 {
        // With one component the responsibilities are identically 1, so EM is
        // the CGL alternation on the whole sample, which initialization has
        // already run to convergence.
        return Ok(MnglResult {
            nll_trace: vec![state.nll],
            responsibilities: r,
            restarts: 0,
            state,
        });
    }
    let mut r = r.values().clone();
    let mut trace = Vec::with_capacity(config.max_em_iters);
    let mut restarts = 0;
    state.converged = false;
    for it in 1..=config.max_em_iters {
        let next = loop {
            match m_step_networks(x, &ResponsibilityMatrix::from_raw(r.clone()), &state, config) {
                Ok(s) => break s,
                Err(Error::EmptyComponent { component, weight }) => {
                    restarts += 1;
                    if restarts > MAX_RESTARTS {
                        return Err(Error::Fit(format!(
                            "component {component} collapsed (weight {weight:.3e}) after {MAX_RESTARTS} restarts at iteration {it}; phi = {:?}",
                            m_step_phi(&ResponsibilityMatrix::from_raw(r.clone()))
                        )));
                    }
                    warn!("component {component} collapsed at iteration {it}; re-seeding its responsibilities");
                    reseed_column(&mut r, component, &mut rng);
                }
                Err(e) => return Err(e),
            }
        };
        state = next;
        let nll = mixture_nll(x, &state)?;
        trace.push(nll);
        r = e_step(x, &state)?.values().clone();
        state.iterations = it;
        state.nll = nll;
        if trace.len() >= 2 && (trace[trace.len() - 2] - nll).abs() < config.settings.tol {
            state.converged = true;
            break;
        }
    }
    canonical_order(&mut state, &mut r);
    Ok(MnglResult {
        state,
        responsibilities: ResponsibilityMatrix::from_raw(r),
        nll_trace: trace,
        restarts,
    })
}
