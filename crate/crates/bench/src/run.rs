//! Scenario sweeps: every instance is fitted by every requested method and
//! scored against its ground truth.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use mngl_core::baselines::{pipeline_cgl, pipeline_onmtf, PipelineResult, StateSolution};
use mngl_core::cgl::cgl_fit;
use mngl_core::metrics::{score_run, ComponentEstimate, RunScore};
use mngl_core::mngl::mngl_fit;
use mngl_core::model::{empirical_covariance, mixture_nll};
use mngl_core::onmtf::onmtf_solve;
use mngl_core::synthgen::{scenario_instance, Instance, ScenarioSpec};
use mngl_core::{Component, DataMatrix, MixtureState, SolverSettings};
use rayon::prelude::*;

use crate::config::{Method, MnglOptions, RunConfig};
use crate::error::{BenchError, Result};
use crate::records::{aggregate, emit_plot_data, write_aggregate, write_jsonl, Metrics, ResultRecord};

/// What a method produced on one dataset.
#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub estimates: Vec<ComponentEstimate>,
    pub nll: Option<f64>,
    pub converged: bool,
}

fn pipeline_nll(x: &DataMatrix, result: &PipelineResult, edge_threshold: f64) -> Result<Option<f64>> {
    let mut components = Vec::with_capacity(result.per_state.len());
    for (j, sol) in result.per_state.iter().enumerate() {
        let StateSolution::Cgl(c) = sol else {
            return Ok(None);
        };
        let count = result.assignment.iter().filter(|&&a| a == j).count();
        components.push(Component {
            phi: count as f64 / x.n() as f64,
            h: c.h.clone(),
            theta_star: c.theta_star.clone().with_threshold(edge_threshold),
        });
    }
    Ok(Some(mixture_nll(x, &MixtureState::new(components)?)?))
}

/// Fits `method` with `m` components / states and `k` nodes. Single-state
/// methods return their one estimate `m` times so it is scored against
/// every true component.
pub fn fit_method(
    method: Method,
    x: &DataMatrix,
    m: usize,
    k: usize,
    settings: &SolverSettings,
    options: &MnglOptions,
) -> Result<MethodOutput> {
    let thr = settings.edge_threshold;
    Ok(match method {
        Method::Mngl => {
            let fit = mngl_fit(x, &options.config(m, k, settings))?;
            MethodOutput {
                estimates: ComponentEstimate::from_mixture(&fit.state),
                nll: Some(fit.state.nll),
                converged: fit.state.converged,
            }
        }
        Method::Cgl => {
            let sol = cgl_fit(x, k, settings)?;
            let state = MixtureState::new(vec![Component {
                phi: 1.0,
                h: sol.h.clone(),
                theta_star: sol.theta_star.clone(),
            }])?;
            let est = ComponentEstimate {
                h: sol.h.values().clone(),
                network: sol.theta_star.values().clone(),
                edge_threshold: thr,
            };
            MethodOutput {
                estimates: vec![est; m],
                nll: Some(mixture_nll(x, &state)?),
                converged: sol.converged,
            }
        }
        Method::Onmtf => {
            let sol = onmtf_solve(&empirical_covariance(x)?, k, settings)?;
            let est = ComponentEstimate {
                h: sol.h.values().clone(),
                network: sol.s_mid.clone(),
                edge_threshold: thr,
            };
            MethodOutput {
                estimates: vec![est; m],
                nll: None,
                converged: true,
            }
        }
        Method::KmeansCgl | Method::KmeansOnmtf => {
            let result = if method == Method::KmeansCgl {
                pipeline_cgl(x, m, k, settings)?
            } else {
                pipeline_onmtf(x, m, k, settings)?
            };
            MethodOutput {
                estimates: ComponentEstimate::from_pipeline(&result, thr),
                nll: pipeline_nll(x, &result, thr)?,
                converged: result.per_state.iter().all(StateSolution::converged),
            }
        }
    })
}

fn metrics(score: &RunScore) -> Metrics {
    Metrics {
        accuracy: score.mean_accuracy,
        f1: score.mean_f1,
        nmi: score.mean_nmi,
        purity: score.mean_purity,
    }
}

fn base_record(spec: &ScenarioSpec, index: usize, method: Method) -> ResultRecord {
    let sweep_index = index / spec.repeats;
    let swept_value = spec.sweep[sweep_index];
    let (mut n, mut p, mut k, mut sigma) = (spec.n, spec.p, spec.k, spec.sigma);
    match spec.id.swept() {
        "n" => n = swept_value as usize,
        "p" => p = swept_value as usize,
        "k" => k = swept_value as usize,
        _ => sigma = swept_value,
    }
    ResultRecord {
        method,
        scenario: spec.id.as_str().to_string(),
        swept: spec.id.swept().to_string(),
        swept_value,
        instance: index,
        repeat: index % spec.repeats,
        seed: spec.instance_seed(index),
        n,
        p,
        k,
        m: spec.m,
        sigma,
        metrics: None,
        nll: None,
        converged: false,
        error: None,
        wall_time_seconds: 0.0,
    }
}

fn score_method(inst: &Instance, method: Method, settings: &SolverSettings, options: &MnglOptions) -> Result<(MethodOutput, RunScore)> {
    let out = fit_method(method, &inst.data, inst.m, inst.k, settings, options)?;
    let score = score_run(&out.estimates, &inst.truth)?;
    Ok((out, score))
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

/// Runs one instance through every method. Failures become records with
/// `converged = false` and no metrics.
pub fn run_instance(config: &RunConfig, spec: &ScenarioSpec, index: usize) -> Vec<ResultRecord> {
    let instance = catch_unwind(AssertUnwindSafe(|| scenario_instance(spec, index)))
        .map_err(panic_message)
        .and_then(|r| r.map_err(|e| e.to_string()));
    config
        .methods
        .iter()
        .map(|&method| {
            let mut rec = base_record(spec, index, method);
            let inst = match &instance {
                Ok(inst) => inst,
                Err(e) => {
                    rec.error = Some(format!("instance generation failed: {e}"));
                    return rec;
                }
            };
            let mut settings = config.solver.clone();
            settings.seed = inst.seed;
            let start = Instant::now();
            let outcome = catch_unwind(AssertUnwindSafe(|| score_method(inst, method, &settings, &config.mngl)))
                .map_err(panic_message)
                .and_then(|r| r.map_err(|e| e.to_string()));
            rec.wall_time_seconds = start.elapsed().as_secs_f64();
            match outcome {
                Ok((out, score)) => {
                    rec.metrics = Some(metrics(&score));
                    rec.nll = out.nll;
                    rec.converged = out.converged;
                }
                Err(e) => {
                    log::warn!("{method} failed on instance {index}: {e}");
                    rec.error = Some(e);
                }
            }
            rec
        })
        .collect()
}

/// All records of a scenario sweep, ordered by (instance, method).
pub fn run_scenario(config: &RunConfig) -> Result<Vec<ResultRecord>> {
    let spec = config
        .scenario
        .as_ref()
        .ok_or_else(|| BenchError::Config("run_scenario needs a scenario".into()))?;
    spec.validate().map_err(|e| BenchError::Config(e.to_string()))?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = config.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| BenchError::Config(format!("worker pool: {e}")))?;
    let mut records: Vec<ResultRecord> = pool.install(|| {
        (0..spec.instance_count())
            .into_par_iter()
            .flat_map_iter(|i| run_instance(config, spec, i))
            .collect()
    });
    records.sort_by_key(|r| (r.instance, r.method));
    Ok(records)
}

/// Paths written by [`write_run`].
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub records: PathBuf,
    pub aggregate: PathBuf,
    pub plot_files: Vec<PathBuf>,
    pub config: PathBuf,
}

/// Writes `records.jsonl`, `aggregate.csv`, `config.json` and `plot/`.
pub fn write_run(config: &RunConfig, records: &[ResultRecord], dir: &Path) -> Result<RunArtifacts> {
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let records_path = dir.join("records.jsonl");
    write_jsonl(&records_path, records)?;
    let aggregate_path = dir.join("aggregate.csv");
    write_aggregate(&aggregate_path, &aggregate(records))?;
    let config_path = dir.join("config.json");
    let json = serde_json::to_string_pretty(config).expect("config serializes");
    std::fs::write(&config_path, json).map_err(|e| BenchError::io(&config_path, e))?;
    let plot_files = emit_plot_data(records, &dir.join("plot"))?;
    Ok(RunArtifacts {
        records: records_path,
        aggregate: aggregate_path,
        plot_files,
        config: config_path,
    })
}
