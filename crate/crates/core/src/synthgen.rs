//! Ground-truth mixture networks with block-structured precision matrices.
//!
//! Each component partitions the `p` variables into `k` contiguous blocks
//! (its parcellation) and owns a `p × p` precision matrix: dense within
//! blocks, sparse between the block pairs that are linked in a random
//! node-level graph, and zero elsewhere. Components differ in their block
//! boundaries and their node-level graphs.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glasso::edges_above;
use crate::linalg::min_eigenvalue;
use crate::model::{ClusterIndicator, DataMatrix};

/// Node-level edges are entries of `HᵀΘH` above this magnitude.
pub const TRUTH_EDGE_THRESHOLD: f64 = 1e-8;
const MAX_DRAWS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruthConfig {
    pub within_density: f64,
    pub cross_density: f64,
    /// Magnitudes are drawn uniformly from `[entry_low, entry_high]`.
    pub entry_low: f64,
    pub entry_high: f64,
    /// Probability that a pair of nodes is linked in a component's graph.
    pub link_probability: f64,
    /// Within-block entries are negative (positive partial correlation)
    /// when set; otherwise their sign is random.
    pub coherent_within: bool,
    /// Cross-block entries are negative when set; otherwise random sign.
    pub coherent_cross: bool,
    pub pd_margin: f64,
}

impl Default for TruthConfig {
    fn default() -> Self {
        Self {
            within_density: 0.8,
            cross_density: 0.05,
            entry_low: 0.2,
            entry_high: 0.6,
            link_probability: 0.5,
            coherent_within: true,
            coherent_cross: true,
            pd_margin: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub thetas: Vec<DMatrix<f64>>,
    pub hs: Vec<ClusterIndicator>,
    /// Block label of every variable, per component.
    pub labels: Vec<Vec<usize>>,
    /// `k + 1` block boundaries per component (first 0, last p).
    pub node_boundaries: Vec<Vec<usize>>,
    /// Node pairs allowed to carry cross-block entries, per component.
    pub link_graphs: Vec<BTreeSet<(usize, usize)>>,
    pub phi: Vec<f64>,
    pub seed: u64,
}

impl GroundTruth {
    pub fn m(&self) -> usize {
        self.thetas.len()
    }

    pub fn p(&self) -> usize {
        self.thetas[0].nrows()
    }

    pub fn k(&self) -> usize {
        self.hs[0].k()
    }

    /// `Θ* = HᵀΘH` for component `j`.
    pub fn node_precision(&self, j: usize) -> DMatrix<f64> {
        let h = self.hs[j].values();
        h.tr_mul(&(&self.thetas[j] * h))
    }

    pub fn true_edges(&self, j: usize) -> BTreeSet<(usize, usize)> {
        edges_above(&self.node_precision(j), TRUTH_EDGE_THRESHOLD)
    }
}

fn boundaries_for(p: usize, k: usize, j: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let base: Vec<usize> = (0..=k).map(|t| ((t * p) as f64 / k as f64).round() as usize).collect();
    if j == 0 || k == 1 {
        return base;
    }
    let max_shift = ((p / k) / 3).max(1) as i64;
    let mut b = base.clone();
    for t in 1..k {
        let mag = rng.random_range(1..=max_shift);
        let sign = if rng.random::<bool>() { 1 } else { -1 };
        b[t] = (base[t] as i64 + sign * mag).clamp(0, p as i64) as usize;
    }
    b
}

fn draw_magnitude(cfg: &TruthConfig, rng: &mut ChaCha8Rng) -> f64 {
    if cfg.entry_high > cfg.entry_low {
        rng.random_range(cfg.entry_low..cfg.entry_high)
    } else {
        cfg.entry_low
    }
}

/// Ground truth with the default [`TruthConfig`].
pub fn generate_truth(p: usize, k: usize, m: usize, seed: u64) -> Result<GroundTruth> {
    generate_truth_with(p, k, m, seed, &TruthConfig::default())
}

pub fn generate_truth_with(p: usize, k: usize, m: usize, seed: u64, cfg: &TruthConfig) -> Result<GroundTruth> {
    if k == 0 || m == 0 {
        return Err(Error::Generation(format!("need k >= 1 and m >= 1, got k={k}, m={m}")));
    }
    if p < 2 * k {
        return Err(Error::Generation(format!("p={p} is too small for k={k} blocks (need p >= 2k)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut truth = GroundTruth {
        thetas: Vec::with_capacity(m),
        hs: Vec::with_capacity(m),
        labels: Vec::with_capacity(m),
        node_boundaries: Vec::with_capacity(m),
        link_graphs: Vec::with_capacity(m),
        phi: vec![1.0 / m as f64; m],
        seed,
    };
    for j in 0..m {
        let bounds = (0..MAX_DRAWS)
            .map(|_| boundaries_for(p, k, j, &mut rng))
            .find(|b| b.windows(2).all(|w| w[1] > w[0]) && !truth.node_boundaries.contains(b))
            .ok_or_else(|| Error::Generation(format!("no feasible distinct parcellation for component {j}")))?;
        let mut labels = vec![0; p];
        for t in 0..k {
            for v in bounds[t]..bounds[t + 1] {
                labels[v] = t;
            }
        }
        let h = ClusterIndicator::from_labels(&labels, k)?;

        let mut drawn = None;
        for _ in 0..MAX_DRAWS {
            let mut graph = BTreeSet::new();
            loop {
                graph.clear();
                for a in 0..k {
                    for b in a + 1..k {
                        if rng.random::<f64>() < cfg.link_probability {
                            graph.insert((a, b));
                        }
                    }
                }
                if !graph.is_empty() || k == 1 || cfg.link_probability <= 0.0 {
                    break;
                }
            }
            let mut a = DMatrix::zeros(p, p);
            for v in 0..p {
                for u in 0..v {
                    let (lu, lv) = (labels[u], labels[v]);
                    let (density, same) = if lu == lv {
                        (cfg.within_density, true)
                    } else if graph.contains(&(lu.min(lv), lu.max(lv))) {
                        (cfg.cross_density, false)
                    } else {
                        continue;
                    };
                    if rng.random::<f64>() < density {
                        let mag = draw_magnitude(cfg, &mut rng);
                        let sign = if (same && cfg.coherent_within) || (!same && cfg.coherent_cross) {
                            -1.0
                        } else if rng.random::<bool>() {
                            1.0
                        } else {
                            -1.0
                        };
                        a[(u, v)] = sign * mag;
                        a[(v, u)] = sign * mag;
                    }
                }
            }
            let shift = min_eigenvalue(&a).abs() + cfg.pd_margin;
            for v in 0..p {
                a[(v, v)] += shift;
            }
            let hv = h.values();
            let node = hv.tr_mul(&(&a * hv));
            if k == 1 || !edges_above(&node, TRUTH_EDGE_THRESHOLD).is_empty() {
                drawn = Some((a, graph));
                break;
            }
        }
        let (theta, graph) =
            drawn.ok_or_else(|| Error::Generation(format!("component {j} never produced a node-level edge")))?;
        truth.thetas.push(theta);
        truth.hs.push(h);
        truth.labels.push(labels);
        truth.node_boundaries.push(bounds);
        truth.link_graphs.push(graph);
    }
    Ok(truth)
}

/// `n` draws from the mixture plus isotropic noise of standard deviation `sigma`.
/// Returns the data and the generating component of every row.
pub fn sample(truth: &GroundTruth, n: usize, sigma: f64, seed: u64) -> Result<(DataMatrix, Vec<usize>)> {
    if !(sigma >= 0.0) {
        return Err(Error::Value(format!("sigma must be >= 0, got {sigma}")));
    }
    let p = truth.p();
    // x = L⁻ᵀz has covariance (LLᵀ)⁻¹ = Θ⁻¹.
    let factors = truth
        .thetas
        .iter()
        .map(|t| {
            t.clone()
                .cholesky()
                .map(|c| c.l().transpose())
                .ok_or_else(|| Error::NotPositiveDefinite("ground-truth precision".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cum = Vec::with_capacity(truth.m());
    let mut acc = 0.0;
    for &w in &truth.phi {
        acc += w;
        cum.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(n, p);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let u = rng.random::<f64>() * acc;
        let j = cum.iter().position(|&c| u < c).unwrap_or(truth.m() - 1);
        let z = DVector::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
        let xi = factors[j]
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::NotPositiveDefinite("ground-truth factor".into()))?;
        for v in 0..p {
            let noise: f64 = if sigma > 0.0 { StandardNormal.sample(&mut rng) } else { 0.0 };
            x[(i, v)] = xi[v] + sigma * noise;
        }
        labels.push(j);
    }
    Ok((DataMatrix::new(x)?, labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioId {
    S1,
    S2,
    S3,
    S4,
}

impl ScenarioId {
    /// Name of the swept parameter.
    pub fn swept(&self) -> &'static str {
        match self {
            ScenarioId::S1 => "n",
            ScenarioId::S2 => "sigma",
            ScenarioId::S3 => "p",
            ScenarioId::S4 => "k",
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioId::S1 => "s1",
            ScenarioId::S2 => "s2",
            ScenarioId::S3 => "s3",
            ScenarioId::S4 => "s4",
        }
    }
}

impl std::str::FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s1" => Ok(ScenarioId::S1),
            "s2" => Ok(ScenarioId::S2),
            "s3" => Ok(ScenarioId::S3),
            "s4" => Ok(ScenarioId::S4),
            other => Err(Error::Value(format!("unknown scenario '{other}'"))),
        }
    }
}

/// One controlled sweep: a single parameter varies, the rest are fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub m: usize,
    pub sigma: f64,
    pub sweep: Vec<f64>,
    pub repeats: usize,
    pub seed: u64,
    #[serde(default)]
    pub truth: TruthConfig,
}

impl ScenarioSpec {
    pub fn default_for(id: ScenarioId) -> Self {
        let (n, p, k, sigma, sweep) = match id {
            ScenarioId::S1 => (2000, 70, 5, 0.0, vec![200.0, 500.0, 1000.0, 1500.0, 2000.0]),
            ScenarioId::S2 => (2000, 70, 5, 2.0, vec![2.0, 3.0, 4.0, 5.0]),
            ScenarioId::S3 => (2000, 70, 5, 0.0, vec![70.0, 140.0, 210.0, 280.0, 350.0]),
            ScenarioId::S4 => (2000, 70, 5, 0.0, vec![3.0, 5.0, 7.0, 9.0, 11.0]),
        };
        Self {
            id,
            n,
            p,
            k,
            m: 2,
            sigma,
            sweep,
            repeats: 10,
            seed: 0,
            truth: TruthConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats < 1 {
            return Err(Error::Value("repeats must be >= 1".into()));
        }
        if self.sweep.is_empty() {
            return Err(Error::Value("sweep must not be empty".into()));
        }
        for &v in &self.sweep {
            let ok = match self.id {
                ScenarioId::S2 => v >= 0.0 && v.is_finite(),
                _ => v >= 1.0 && v.fract() == 0.0,
            };
            if !ok {
                return Err(Error::Value(format!(
                    "sweep value {v} is invalid for parameter {}",
                    self.id.swept()
                )));
            }
        }
        Ok(())
    }

    pub fn instance_count(&self) -> usize {
        self.sweep.len() * self.repeats
    }

    /// Seed of instance `index` (sweep-major order), derived from the spec seed.
    pub fn instance_seed(&self, index: usize) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64 + 1);
        rng.next_u64()
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub index: usize,
    pub sweep_index: usize,
    pub swept_value: f64,
    pub repeat: usize,
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub m: usize,
    pub sigma: f64,
    pub truth: GroundTruth,
    pub data: DataMatrix,
    pub labels: Vec<usize>,
}

/// Builds instance `index` of the spec (sweep-major, repeats inner).
pub fn scenario_instance(spec: &ScenarioSpec, index: usize) -> Result<Instance> {
    let sweep_index = index / spec.repeats;
    let repeat = index % spec.repeats;
    let v = spec.sweep[sweep_index];
    let (mut n, mut p, mut k, mut sigma) = (spec.n, spec.p, spec.k, spec.sigma);
    match spec.id {
        ScenarioId::S1 => n = v as usize,
        ScenarioId::S2 => sigma = v,
        ScenarioId::S3 => p = v as usize,
        ScenarioId::S4 => k = v as usize,
    }
    let seed = spec.instance_seed(index);
    let truth = generate_truth_with(p, k, spec.m, seed, &spec.truth)?;
    let (data, labels) = sample(&truth, n, sigma, seed.wrapping_add(1))?;
    Ok(Instance {
        index,
        sweep_index,
        swept_value: v,
        repeat,
        seed,
        n,
        p,
        k,
        m: spec.m,
        sigma,
        truth,
        data,
        labels,
    })
}

/// All `repeats × |sweep|` instances in order.
pub fn scenario_instances(spec: &ScenarioSpec) -> impl Iterator<Item = Result<Instance>> + '_ {
    (0..spec.instance_count()).map(move |i| scenario_instance(spec, i))
}
