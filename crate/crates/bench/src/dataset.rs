//! Dataset-level verbs: synthetic dataset archives, single fits with their
//! artifacts, and scoring of saved fits against saved truth.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use mngl_core::cgl::cgl_fit;
use mngl_core::metrics::{score_run, ComponentEstimate, RunScore};
use mngl_core::mngl::{mngl_fit, MnglResult};
use mngl_core::model::mixture_nll;
use mngl_core::synthgen::{GroundTruth, Instance};
use mngl_core::{ClusterIndicator, Component, DMatrix, DataMatrix, MixtureState, ResponsibilityMatrix};
use serde::{Deserialize, Serialize};

use crate::config::{Method, RunConfig};
use crate::error::{BenchError, Result};
use crate::ingest::{read_matrix, write_matrix, Format};
use crate::records::write_text;

/// Serializable ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub p: usize,
    pub k: usize,
    pub m: usize,
    pub seed: u64,
    pub phi: Vec<f64>,
    /// Block label of every variable, per component.
    pub labels: Vec<Vec<usize>>,
    pub node_boundaries: Vec<Vec<usize>>,
    pub link_graphs: Vec<Vec<(usize, usize)>>,
    /// Row-major `p × p` precision matrices.
    pub thetas: Vec<Vec<Vec<f64>>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect()
}

impl TruthFile {
    pub fn from_truth(t: &GroundTruth) -> Self {
        Self {
            p: t.p(),
            k: t.k(),
            m: t.m(),
            seed: t.seed,
            phi: t.phi.clone(),
            labels: t.labels.clone(),
            node_boundaries: t.node_boundaries.clone(),
            link_graphs: t.link_graphs.iter().map(|g| g.iter().cloned().collect()).collect(),
            thetas: t.thetas.iter().map(rows_of).collect(),
        }
    }

    pub fn to_truth(&self) -> Result<GroundTruth> {
        let bad = |msg: String| BenchError::Config(format!("truth file: {msg}"));
        if self.labels.len() != self.m || self.thetas.len() != self.m || self.phi.len() != self.m {
            return Err(bad(format!("expected {} components", self.m)));
        }
        let thetas = self
            .thetas
            .iter()
            .map(|rows| {
                if rows.len() != self.p || rows.iter().any(|r| r.len() != self.p) {
                    return Err(bad(format!("precision is not {0}x{0}", self.p)));
                }
                Ok(DMatrix::from_fn(self.p, self.p, |i, j| rows[i][j]))
            })
            .collect::<Result<Vec<_>>>()?;
        let hs = self
            .labels
            .iter()
            .map(|l| ClusterIndicator::from_labels(l, self.k).map_err(|e| bad(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        Ok(GroundTruth {
            thetas,
            hs,
            labels: self.labels.clone(),
            node_boundaries: self.node_boundaries.clone(),
            link_graphs: self.link_graphs.iter().map(|g| g.iter().cloned().collect::<BTreeSet<_>>()).collect(),
            phi: self.phi.clone(),
            seed: self.seed,
        })
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value).expect("serializes") + "\n"))
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| BenchError::io(path, e.into()))?;
    for row in rows {
        w.serialize(row).map_err(|e| BenchError::io(path, e.into()))?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

/// Writes `data.csv` (with a `v0..` header), `states.csv` and `truth.json`.
pub fn write_instance(inst: &Instance, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let path = dir.join("data.csv");
    let x = inst.data.values();
    let mut w = csv::Writer::from_path(&path).map_err(|e| BenchError::io(&path, e.into()))?;
    w.write_record((0..x.ncols()).map(|j| format!("v{j}")))
        .map_err(|e| BenchError::io(&path, e.into()))?;
    for i in 0..x.nrows() {
        w.write_record(x.row(i).iter().map(|v| v.to_string()))
            .map_err(|e| BenchError::io(&path, e.into()))?;
    }
    w.flush().map_err(|e| BenchError::io(&path, e))?;
    #[derive(Serialize)]
    struct State {
        state: usize,
    }
    write_csv(&dir.join("states.csv"), inst.labels.iter().map(|&state| State { state }))?;
    write_json(&dir.join("truth.json"), &TruthFile::from_truth(&inst.truth))
}

pub fn read_truth(path: &Path) -> Result<GroundTruth> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    let file: TruthFile = serde_json::from_str(&text).map_err(|e| BenchError::parse(path, e.to_string()))?;
    file.to_truth()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSummary {
    pub method: Method,
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub k: usize,
    pub nll: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restarts: usize,
    pub edge_threshold: f64,
    pub settings: mngl_core::SolverSettings,
}

#[derive(Serialize, Deserialize)]
struct PhiRow {
    component: usize,
    phi: f64,
}

#[derive(Serialize, Deserialize)]
struct TraceRow {
    iteration: usize,
    nll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRow {
    pub node_a: usize,
    pub node_b: usize,
    pub weight: f64,
}

/// Off-diagonal entries above `threshold` in magnitude, upper triangle.
pub fn edge_rows(theta: &DMatrix<f64>, threshold: f64) -> Vec<EdgeRow> {
    let k = theta.nrows();
    (0..k)
        .flat_map(|a| (a + 1..k).map(move |b| (a, b)))
        .filter(|&(a, b)| theta[(a, b)].abs() > threshold)
        .map(|(a, b)| EdgeRow {
            node_a: a,
            node_b: b,
            weight: theta[(a, b)],
        })
        .collect()
}

/// Fits a dataset with `mngl` (or `cgl`, which is the `m = 1` layout).
pub fn fit_in_memory(x: &DataMatrix, method: Method, config: &RunConfig) -> Result<MnglResult> {
    let (m, k) = (config.mngl.m, config.mngl.k);
    match method {
        Method::Mngl => Ok(mngl_fit(x, &config.mngl.config(m, k, &config.solver))?),
        Method::Cgl => {
            let sol = cgl_fit(x, k, &config.solver)?;
            let mut state = MixtureState::new(vec![Component {
                phi: 1.0,
                h: sol.h,
                theta_star: sol.theta_star.with_threshold(config.solver.edge_threshold),
            }])?;
            state.nll = mixture_nll(x, &state)?;
            state.iterations = sol.iterations;
            state.converged = sol.converged;
            Ok(MnglResult {
                nll_trace: vec![state.nll],
                responsibilities: ResponsibilityMatrix::uniform(x.n(), 1),
                restarts: 0,
                state,
            })
        }
        other => Err(BenchError::Config(format!("fit supports mngl and cgl, not {other}"))),
    }
}

/// Writes `H_<j>.csv`, `theta_<j>.csv`, `edges_<j>.csv` per component plus
/// `phi.csv`, `responsibilities.csv`, `nll_trace.csv` and `summary.json`.
pub fn write_fit(fit: &MnglResult, method: Method, x: &DataMatrix, config: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let thr = config.solver.edge_threshold;
    let mut written = Vec::new();
    for (j, c) in fit.state.components.iter().enumerate() {
        let h = dir.join(format!("H_{j}.csv"));
        write_matrix(&h, c.h.values())?;
        let t = dir.join(format!("theta_{j}.csv"));
        write_matrix(&t, c.theta_star.values())?;
        let e = dir.join(format!("edges_{j}.csv"));
        write_csv(&e, edge_rows(c.theta_star.values(), thr))?;
        written.extend([h, t, e]);
    }
    let phi = dir.join("phi.csv");
    write_csv(&phi, fit.state.phi().into_iter().enumerate().map(|(component, phi)| PhiRow { component, phi }))?;
    let resp = dir.join("responsibilities.csv");
    write_matrix(&resp, fit.responsibilities.values())?;
    let trace = dir.join("nll_trace.csv");
    write_csv(&trace, fit.nll_trace.iter().enumerate().map(|(i, &nll)| TraceRow { iteration: i + 1, nll }))?;
    let summary = dir.join("summary.json");
    write_json(
        &summary,
        &FitSummary {
            method,
            n: x.n(),
            p: x.p(),
            m: fit.state.m(),
            k: fit.state.k(),
            nll: fit.state.nll,
            iterations: fit.state.iterations,
            converged: fit.state.converged,
            restarts: fit.restarts,
            edge_threshold: thr,
            settings: config.solver.clone(),
        },
    )?;
    written.extend([phi, resp, trace, summary]);
    Ok(written)
}

/// Reads the `H_<j>.csv` / `theta_<j>.csv` pairs of a saved fit.
pub fn read_fit(dir: &Path, edge_threshold: f64) -> Result<Vec<ComponentEstimate>> {
    let mut out = Vec::new();
    for j in 0.. {
        let h = dir.join(format!("H_{j}.csv"));
        if !h.exists() {
            break;
        }
        out.push(ComponentEstimate {
            h: read_matrix(&h, Format::Csv)?,
            network: read_matrix(&dir.join(format!("theta_{j}.csv")), Format::Csv)?,
            edge_threshold,
        });
    }
    if out.is_empty() {
        return Err(BenchError::Config(format!("no H_0.csv in {}", dir.display())));
    }
    Ok(out)
}

/// Scores a saved fit against a saved truth and writes `score.json`.
pub fn score_saved(fit_dir: &Path, truth_path: &Path, edge_threshold: f64) -> Result<RunScore> {
    let truth = read_truth(truth_path)?;
    let est = read_fit(fit_dir, edge_threshold)?;
    if est.len() != truth.m() {
        return Err(BenchError::Config(format!(
            "fit has {} components, truth has {}",
            est.len(),
            truth.m()
        )));
    }
    let score = score_run(&est, &truth)?;
    write_json(&fit_dir.join("score.json"), &score)?;
    Ok(score)
}
