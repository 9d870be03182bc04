//! Two-stage baselines: k-means splits observations into states, then a
//! single-state solver runs on each state's subset.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::cgl::{cgl_fit_cov, CglSolution};
use crate::error::{Error, Result};
use crate::model::{empirical_covariance, DataMatrix, SolverSettings};
use crate::onmtf::{onmtf_solve, OnmtfSolution};

pub use crate::kmeans::kmeans;

#[derive(Debug, Clone)]
pub enum StateSolution {
    Cgl(CglSolution),
    Onmtf(OnmtfSolution),
}

impl StateSolution {
    pub fn h(&self) -> &DMatrix<f64> {
        match self {
            StateSolution::Cgl(s) => s.h.values(),
            StateSolution::Onmtf(s) => s.h.values(),
        }
    }

    /// `Θ*` for CGL; the middle factor for ONMtF.
    pub fn network(&self) -> &DMatrix<f64> {
        match self {
            StateSolution::Cgl(s) => s.theta_star.values(),
            StateSolution::Onmtf(s) => &s.s_mid,
        }
    }

    pub fn converged(&self) -> bool {
        match self {
            StateSolution::Cgl(s) => s.converged,
            StateSolution::Onmtf(_) => true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub assignment: Vec<usize>,
    pub per_state: Vec<StateSolution>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Solver {
    Cgl,
    Onmtf,
}

fn split(x: &DataMatrix, m: usize, k: usize, seed: u64) -> Result<(Vec<usize>, Vec<DataMatrix>)> {
    if m == 0 || m > x.n() {
        return Err(Error::Value(format!("need 1 <= m <= n, got m={m}, n={}", x.n())));
    }
    let assignment = kmeans(x.values(), m, seed);
    let subsets = (0..m)
        .map(|j| {
            let idx: Vec<usize> = (0..x.n()).filter(|&i| assignment[i] == j).collect();
            if idx.len() < k.max(1) {
                return Err(Error::UnderpopulatedState {
                    state: j,
                    count: idx.len(),
                    needed: k.max(1),
                });
            }
            x.select_rows(&idx)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((assignment, subsets))
}

fn pipeline(x: &DataMatrix, m: usize, k: usize, settings: &SolverSettings, solver: Solver) -> Result<PipelineResult> {
    settings.validate()?;
    let (assignment, subsets) = split(x, m, k, settings.seed)?;
    let per_state = subsets
        .par_iter()
        .map(|sub| {
            let s = empirical_covariance(sub)?;
            Ok(match solver {
                Solver::Cgl => StateSolution::Cgl(cgl_fit_cov(&s, k, settings)?),
                Solver::Onmtf => StateSolution::Onmtf(onmtf_solve(&s, k, settings)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PipelineResult { assignment, per_state })
}

/// k-means over observations, then CGL per state.
pub fn pipeline_cgl(x: &DataMatrix, m: usize, k: usize, settings: &SolverSettings) -> Result<PipelineResult> {
    pipeline(x, m, k, settings, Solver::Cgl)
}

/// k-means over observations, then ONMtF per state.
pub fn pipeline_onmtf(x: &DataMatrix, m: usize, k: usize, settings: &SolverSettings) -> Result<PipelineResult> {
    pipeline(x, m, k, settings, Solver::Onmtf)
}
