//! Run configuration, loadable from JSON and overridable from flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mngl_core::mngl::MnglConfig;
use mngl_core::synthgen::ScenarioSpec;
use mngl_core::SolverSettings;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Mngl,
    Cgl,
    Onmtf,
    KmeansCgl,
    KmeansOnmtf,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Mngl,
        Method::Cgl,
        Method::Onmtf,
        Method::KmeansCgl,
        Method::KmeansOnmtf,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Mngl => "mngl",
            Method::Cgl => "cgl",
            Method::Onmtf => "onmtf",
            Method::KmeansCgl => "kmeans-cgl",
            Method::KmeansOnmtf => "kmeans-onmtf",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| BenchError::Config(format!("unknown method '{s}'")))
    }
}

/// Comma-separated method list, e.g. `mngl,kmeans-cgl`.
pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let mut out: Vec<Method> = list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect::<Result<_>>()?;
    out.dedup();
    if out.is_empty() {
        return Err(BenchError::Config("no methods given".into()));
    }
    Ok(out)
}

/// Mixture options that are not solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MnglOptions {
    /// Component count for dataset fits; scenarios use their own `m`.
    pub m: usize,
    /// Node count for dataset fits; scenarios use their own `k`.
    pub k: usize,
    pub max_em_iters: usize,
    pub n_init: usize,
    pub full_m_step: bool,
    pub safeguard: bool,
}

impl Default for MnglOptions {
    fn default() -> Self {
        let base = MnglConfig::new(2, 6, SolverSettings::default());
        Self {
            m: base.m,
            k: base.k,
            max_em_iters: base.max_em_iters,
            n_init: base.n_init,
            full_m_step: base.full_m_step,
            safeguard: base.safeguard,
        }
    }
}

impl MnglOptions {
    pub fn config(&self, m: usize, k: usize, settings: &SolverSettings) -> MnglConfig {
        let mut c = MnglConfig::new(m, k, settings.clone());
        c.max_em_iters = self.max_em_iters;
        c.n_init = self.n_init;
        c.full_m_step = self.full_m_step;
        c.safeguard = self.safeguard;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub methods: Vec<Method>,
    pub scenario: Option<ScenarioSpec>,
    pub dataset: Option<PathBuf>,
    pub transpose: bool,
    pub solver: SolverSettings,
    pub mngl: MnglOptions,
    pub output_dir: PathBuf,
    /// Worker threads; `None` uses the available parallelism.
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Mngl, Method::KmeansCgl, Method::KmeansOnmtf],
            scenario: None,
            dataset: None,
            transpose: false,
            solver: SolverSettings::default(),
            mngl: MnglOptions::default(),
            output_dir: PathBuf::from("out"),
            workers: None,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.scenario, &self.dataset) {
            (Some(_), Some(_)) => return Err(BenchError::Config("give either a scenario or a dataset, not both".into())),
            (None, None) => return Err(BenchError::Config("need a scenario or a dataset".into())),
            _ => {}
        }
        if self.methods.is_empty() {
            return Err(BenchError::Config("no methods given".into()));
        }
        if let Some(spec) = &self.scenario {
            spec.validate().map_err(|e| BenchError::Config(e.to_string()))?;
        }
        if self.workers == Some(0) {
            return Err(BenchError::Config("workers must be >= 1".into()));
        }
        self.mngl
            .config(self.mngl.m, self.mngl.k, &self.solver)
            .validate()
            .map_err(|e| BenchError::Config(e.to_string()))
    }
}
