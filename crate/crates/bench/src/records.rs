//! Raw result records (JSON lines), per-sweep aggregates and plot data (CSV).

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::Method;
use crate::error::{BenchError, Result};

/// Means over aligned components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub f1: f64,
    pub nmi: f64,
    pub purity: f64,
}

impl Metrics {
    pub const NAMES: [&'static str; 4] = ["accuracy", "f1", "nmi", "purity"];

    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "accuracy" => Some(self.accuracy),
            "f1" => Some(self.f1),
            "nmi" => Some(self.nmi),
            "purity" => Some(self.purity),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub method: Method,
    pub scenario: String,
    pub swept: String,
    pub swept_value: f64,
    pub instance: usize,
    pub repeat: usize,
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub m: usize,
    pub sigma: f64,
    /// `None` when the fit failed.
    pub metrics: Option<Metrics>,
    pub nll: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
    pub wall_time_seconds: f64,
}

impl ResultRecord {
    /// The record with its timing zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_time_seconds: 0.0,
            ..self.clone()
        }
    }
}

pub fn to_jsonl(records: &[ResultRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
        .collect()
}

pub fn write_jsonl(path: &Path, records: &[ResultRecord]) -> Result<()> {
    std::fs::write(path, to_jsonl(records)).map_err(|e| BenchError::io(path, e))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<ResultRecord>> {
    let file = std::fs::File::open(path).map_err(|e| BenchError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| BenchError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| BenchError::parse(path, format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scenario: String,
    pub swept_value: f64,
    pub method: Method,
    pub metric: String,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    /// Successful fits contributing to the row.
    pub count: usize,
    pub failures: usize,
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One row per (scenario, swept value, method, metric), in that order.
/// Failed fits are counted but excluded from the statistics.
pub fn aggregate(records: &[ResultRecord]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(String, u64, Method), Vec<&ResultRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.scenario.clone(), r.swept_value.to_bits(), r.method))
            .or_default()
            .push(r);
    }
    let mut keys: Vec<_> = groups.keys().cloned().collect();
    keys.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(f64::from_bits(a.1).total_cmp(&f64::from_bits(b.1)))
            .then(a.2.cmp(&b.2))
    });
    let mut rows = Vec::new();
    for key in keys {
        let group = &groups[&key];
        let ok: Vec<&Metrics> = group.iter().filter_map(|r| r.metrics.as_ref()).collect();
        for name in Metrics::NAMES {
            let values: Vec<f64> = ok.iter().map(|m| m.get(name).unwrap()).collect();
            let (mean, std) = mean_std(&values);
            rows.push(AggregateRow {
                scenario: key.0.clone(),
                swept_value: f64::from_bits(key.1),
                method: key.2,
                metric: name.to_string(),
                mean,
                std,
                count: values.len(),
                failures: group.len() - values.len(),
            });
        }
    }
    rows
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| BenchError::io(path, e.into()))?;
    for row in rows {
        w.serialize(row).map_err(|e| BenchError::io(path, e.into()))?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub swept_value: f64,
    pub method: Method,
    pub mean: f64,
    pub std: f64,
}

/// One CSV per (scenario, metric), named `<scenario>_<metric>.csv`, with
/// columns `swept_value, method, mean, std`. Returns the paths written.
pub fn emit_plot_data(records: &[ResultRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(BenchError::Config("no records to aggregate".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let rows = aggregate(records);
    let mut files: BTreeMap<(String, String), Vec<PlotRow>> = BTreeMap::new();
    for r in rows {
        files.entry((r.scenario.clone(), r.metric.clone())).or_default().push(PlotRow {
            swept_value: r.swept_value,
            method: r.method,
            mean: r.mean,
            std: r.std,
        });
    }
    let mut written = Vec::new();
    for ((scenario, metric), rows) in files {
        let path = dir.join(format!("{scenario}_{metric}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(|e| BenchError::io(&path, e.into()))?;
        for row in &rows {
            w.serialize(row).map_err(|e| BenchError::io(&path, e.into()))?;
        }
        w.flush().map_err(|e| BenchError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| BenchError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| BenchError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(method: Method, value: f64, repeat: usize, f1: Option<f64>) -> ResultRecord {
        ResultRecord {
            method,
            scenario: "s1".into(),
            swept: "n".into(),
            swept_value: value,
            instance: repeat,
            repeat,
            seed: 1,
            n: value as usize,
            p: 10,
            k: 2,
            m: 2,
            sigma: 0.0,
            metrics: f1.map(|f| Metrics {
                accuracy: f,
                f1: f,
                nmi: f / 2.0,
                purity: 1.0,
            }),
            nll: f1.map(|_| 1.5),
            converged: f1.is_some(),
            error: f1.is_none().then(|| "boom".to_string()),
            wall_time_seconds: 0.25,
        }
    }

    #[test]
    fn mean_std_small_cases() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
        assert!(mean_std(&[]).0.is_nan());
    }

    #[test]
    fn jsonl_round_trip() {
        let recs = vec![record(Method::Mngl, 200.0, 0, Some(0.5)), record(Method::Cgl, 200.0, 0, None)];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        write_jsonl(&path, &recs).unwrap();
        assert_eq!(read_jsonl(&path).unwrap(), recs);
        assert!(to_jsonl(&recs).lines().nth(1).unwrap().contains("\"metrics\":null"));
    }

    #[test]
    fn failures_excluded_from_means() {
        let recs = vec![
            record(Method::Mngl, 200.0, 0, Some(0.4)),
            record(Method::Mngl, 200.0, 1, Some(0.6)),
            record(Method::Mngl, 200.0, 2, None),
        ];
        let rows = aggregate(&recs);
        let f1 = rows.iter().find(|r| r.metric == "f1").unwrap();
        assert!((f1.mean - 0.5).abs() < 1e-15);
        assert_eq!((f1.count, f1.failures), (2, 1));
    }

    #[test]
    fn plot_files_per_metric_with_full_rows() {
        let mut recs = Vec::new();
        for (i, v) in [200.0, 500.0, 1000.0].into_iter().enumerate() {
            for m in [Method::Mngl, Method::KmeansCgl] {
                for rep in 0..2 {
                    recs.push(record(m, v, rep, Some(0.1 * (i + rep) as f64)));
                }
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let files = emit_plot_data(&recs, dir.path()).unwrap();
        assert_eq!(files.len(), 4);
        for f in &files {
            let mut r = csv::Reader::from_path(f).unwrap();
            assert_eq!(r.headers().unwrap(), vec!["swept_value", "method", "mean", "std"]);
            assert_eq!(r.records().count(), 6);
        }
        assert!(emit_plot_data(&[], dir.path()).is_err());
    }
}
