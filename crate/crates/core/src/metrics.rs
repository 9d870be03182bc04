//! Edge-detection and node-discovery scores, plus mixture-component alignment.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};

use crate::baselines::PipelineResult;
use crate::error::{Error, Result};
use crate::glasso::edges_above;
use crate::model::MixtureState;
use crate::onmtf::argmax_rows;
use crate::synthgen::GroundTruth;

pub type EdgeSet = BTreeSet<(usize, usize)>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeScore {
    /// True edges detected.
    pub n_d: usize,
    /// Ground-truth edges.
    pub n_g: usize,
    /// Detected edges.
    pub n_a: usize,
    pub accuracy: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterScore {
    pub nmi: f64,
    pub purity: f64,
}

pub fn edge_score(detected: &EdgeSet, truth: &EdgeSet) -> Result<EdgeScore> {
    let n_g = truth.len();
    if n_g == 0 {
        return Err(Error::NoTruthEdges);
    }
    let n_a = detected.len();
    let n_d = detected.intersection(truth).count();
    let f1 = if n_d > 0 {
        let d = n_d as f64;
        2.0 * d * d / (n_a as f64 * d + n_g as f64 * d)
    } else {
        0.0
    };
    Ok(EdgeScore {
        n_d,
        n_g,
        n_a,
        accuracy: n_d as f64 / n_g as f64,
        f1,
    })
}

/// Dense contingency table between two labellings (rows: `a`, columns: `b`),
/// after compacting each labelling to `0..distinct`.
fn contingency(a: &[usize], b: &[usize]) -> Result<DMatrix<f64>> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("label vectors of length {} and {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Shape("label vectors must be non-empty".into()));
    }
    let compact = |v: &[usize]| {
        let ids: BTreeMap<usize, usize> = v
            .iter()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(i, &l)| (l, i))
            .collect();
        (v.iter().map(|l| ids[l]).collect::<Vec<_>>(), ids.len())
    };
    let (ca, na) = compact(a);
    let (cb, nb) = compact(b);
    let mut t = DMatrix::zeros(na, nb);
    for (&x, &y) in ca.iter().zip(&cb) {
        t[(x, y)] += 1.0;
    }
    Ok(t)
}

/// `Σ_c max_t |c ∩ t| / N`.
pub fn purity(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let t = contingency(pred, truth)?;
    let hit: f64 = t.row_iter().map(|r| r.max()).sum();
    Ok(hit / pred.len() as f64)
}

/// `I(pred; truth) / √(H(pred) H(truth))`, natural logs; 0 when either side
/// is a single cluster.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let t = contingency(pred, truth)?;
    let n = pred.len() as f64;
    let ra: Vec<f64> = t.row_iter().map(|r| r.sum()).collect();
    let cb: Vec<f64> = t.column_iter().map(|c| c.sum()).collect();
    let entropy = |v: &[f64]| -v.iter().filter(|&&c| c > 0.0).map(|&c| c / n * (c / n).ln()).sum::<f64>();
    let (ha, hb) = (entropy(&ra), entropy(&cb));
    if ha <= 0.0 || hb <= 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for i in 0..t.nrows() {
        for j in 0..t.ncols() {
            let c = t[(i, j)];
            if c > 0.0 {
                mi += c / n * (c * n / (ra[i] * cb[j])).ln();
            }
        }
    }
    Ok((mi / (ha * hb).sqrt()).clamp(0.0, 1.0))
}

/// Maximum-weight perfect assignment on a square score matrix:
/// `result[row] = column`.
pub fn max_assignment(scores: &DMatrix<f64>) -> Vec<usize> {
    let n = scores.nrows();
    if n == 0 {
        return Vec::new();
    }
    // Scores here are bounded by a few units, so a 1e12 fixed-point scale is exact enough.
    let weights = Matrix::from_fn(n, scores.ncols(), |(i, j)| (scores[(i, j)] * 1e12).round() as i64);
    kuhn_munkres(&weights).1
}

/// One estimated component in scoring form.
#[derive(Debug, Clone)]
pub struct ComponentEstimate {
    pub h: DMatrix<f64>,
    /// Node-level matrix whose thresholded off-diagonal gives the edges.
    pub network: DMatrix<f64>,
    pub edge_threshold: f64,
}

impl ComponentEstimate {
    pub fn from_mixture(state: &MixtureState) -> Vec<Self> {
        state
            .components
            .iter()
            .map(|c| Self {
                h: c.h.values().clone(),
                network: c.theta_star.values().clone(),
                edge_threshold: c.theta_star.sparsity_threshold,
            })
            .collect()
    }

    pub fn from_pipeline(result: &PipelineResult, edge_threshold: f64) -> Vec<Self> {
        result
            .per_state
            .iter()
            .map(|s| Self {
                h: s.h().clone(),
                network: s.network().clone(),
                edge_threshold,
            })
            .collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        argmax_rows(&self.h, false).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub edges: EdgeScore,
    pub clusters: ClusterScore,
    /// `node_map[estimated node] = true node`.
    pub node_map: Vec<usize>,
}

/// Scores one estimated component against one true component. Estimated
/// nodes are matched to true nodes by a maximum-overlap assignment before
/// the edge sets are compared.
pub fn score_pair(est: &ComponentEstimate, truth: &GroundTruth, j: usize) -> Result<PairScore> {
    let k = truth.k();
    let pred = est.labels();
    let true_labels = &truth.labels[j];
    if pred.len() != true_labels.len() {
        return Err(Error::Shape("estimated and true parcellations differ in p".into()));
    }
    let mut table = DMatrix::zeros(k, k);
    for (&a, &b) in pred.iter().zip(true_labels) {
        if a < k {
            table[(a, b)] += 1.0;
        }
    }
    let node_map = max_assignment(&table);
    let detected: EdgeSet = edges_above(&est.network, est.edge_threshold)
        .into_iter()
        .map(|(a, b)| {
            let (x, y) = (node_map[a], node_map[b]);
            (x.min(y), x.max(y))
        })
        .collect();
    Ok(PairScore {
        edges: edge_score(&detected, &truth.true_edges(j))?,
        clusters: ClusterScore {
            nmi: nmi(&pred, true_labels)?,
            purity: purity(&pred, true_labels)?,
        },
        node_map,
    })
}

fn pair_matrix(estimated: &[ComponentEstimate], truth: &GroundTruth) -> Result<Vec<Vec<PairScore>>> {
    estimated
        .iter()
        .map(|e| (0..truth.m()).map(|t| score_pair(e, truth, t)).collect())
        .collect()
}

fn assignment_from_pairs(pairs: &[Vec<PairScore>]) -> Vec<usize> {
    let m = pairs.len();
    // Summed F1 first; NMI only separates ties.
    let scores = DMatrix::from_fn(m, m, |i, t| pairs[i][t].edges.f1 + 1e-6 * pairs[i][t].clusters.nmi);
    max_assignment(&scores)
}

/// Permutation `π` pairing estimated component `j` with true component
/// `π[j]`, maximizing summed edge F1 (NMI breaks ties).
pub fn align_components(estimated: &[ComponentEstimate], truth: &GroundTruth) -> Result<Vec<usize>> {
    if estimated.len() != truth.m() {
        return Err(Error::Shape(format!(
            "{} estimated components for {} true components",
            estimated.len(),
            truth.m()
        )));
    }
    Ok(assignment_from_pairs(&pair_matrix(estimated, truth)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunScore {
    pub permutation: Vec<usize>,
    pub per_component: Vec<PairScore>,
    pub mean_accuracy: f64,
    pub mean_f1: f64,
    pub mean_nmi: f64,
    pub mean_purity: f64,
}

/// Aligns components, then averages per-component scores.
pub fn score_run(estimated: &[ComponentEstimate], truth: &GroundTruth) -> Result<RunScore> {
    if estimated.len() != truth.m() {
        return Err(Error::Shape(format!(
            "{} estimated components for {} true components",
            estimated.len(),
            truth.m()
        )));
    }
    let pairs = pair_matrix(estimated, truth)?;
    let permutation = assignment_from_pairs(&pairs);
    let per_component: Vec<PairScore> = permutation
        .iter()
        .enumerate()
        .map(|(j, &t)| pairs[j][t].clone())
        .collect();
    let m = per_component.len() as f64;
    let mean = |f: &dyn Fn(&PairScore) -> f64| per_component.iter().map(f).sum::<f64>() / m;
    Ok(RunScore {
        mean_accuracy: mean(&|s| s.edges.accuracy),
        mean_f1: mean(&|s| s.edges.f1),
        mean_nmi: mean(&|s| s.clusters.nmi),
        mean_purity: mean(&|s| s.clusters.purity),
        permutation,
        per_component,
    })
}
