use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mngl_core::synthgen::{scenario_instance, ScenarioId, ScenarioSpec};
use mngl_core::SolverSettings;
use mngl_bench::config::parse_methods;
use mngl_bench::dataset::{fit_in_memory, score_saved, write_fit, write_instance};
use mngl_bench::ingest::{ingest_matrix, Format};
use mngl_bench::records::{emit_plot_data, read_jsonl, write_aggregate};
use mngl_bench::run::{run_scenario, write_run};
use mngl_bench::{BenchError, Method, Result, RunConfig};

#[derive(Parser)]
#[command(name = "mngl", version, about = "Multi-state sparse network discovery benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario sweep over the chosen methods.
    Bench(Common),
    /// Fit one dataset and write its artifacts.
    Fit {
        /// Data file (CSV or TSV, one observation per row).
        data: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Write one synthetic instance (data, state labels, truth).
    Gen {
        /// Instance index within the scenario sweep.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Score a saved fit against a saved truth.
    Score {
        /// Directory holding H_<j>.csv and theta_<j>.csv.
        #[arg(long)]
        fit: PathBuf,
        /// truth.json written by `gen`.
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        edge_threshold: Option<f64>,
    },
    /// Aggregate saved records into plot data.
    PlotData {
        /// records.jsonl written by `bench`.
        records: PathBuf,
        #[arg(long, default_value = "plot")]
        out: PathBuf,
    },
}

#[derive(Args, Clone, Default)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    /// Comma-separated: mngl, cgl, onmtf, kmeans-cgl, kmeans-onmtf.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    edge_threshold: Option<f64>,
    /// Input stores variables as rows.
    #[arg(long)]
    transpose: bool,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Loads `--config` if given, then applies flags on top.
fn resolve(common: &Common, need_scenario: bool) -> Result<RunConfig> {
    let mut c = match &common.config {
        Some(p) => RunConfig::from_json_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = &common.scenario {
        let id: ScenarioId = s.parse().map_err(|e: mngl_core::Error| BenchError::Config(e.to_string()))?;
        if c.scenario.as_ref().is_none_or(|spec| spec.id != id) {
            c.scenario = Some(ScenarioSpec::default_for(id));
        }
    }
    if need_scenario && c.scenario.is_none() {
        c.scenario = Some(ScenarioSpec::default_for(ScenarioId::S1));
    }
    if let Some(spec) = c.scenario.as_mut() {
        if let Some(r) = common.repeats {
            spec.repeats = r;
        }
        if let Some(s) = common.seed {
            spec.seed = s;
        }
        if let Some(m) = common.m {
            spec.m = m;
        }
        if let Some(k) = common.k {
            spec.k = k;
        }
    }
    if let Some(list) = &common.methods {
        c.methods = parse_methods(list)?;
    }
    if let Some(s) = common.seed {
        c.solver.seed = s;
    }
    if let Some(l) = common.lambda {
        c.solver.lambda = l;
    }
    if let Some(t) = common.edge_threshold {
        c.solver.edge_threshold = t;
    }
    if let Some(m) = common.m {
        c.mngl.m = m;
    }
    if let Some(k) = common.k {
        c.mngl.k = k;
    }
    if common.transpose {
        c.transpose = true;
    }
    if common.workers.is_some() {
        c.workers = common.workers;
    }
    if let Some(o) = &common.out {
        c.output_dir = o.clone();
    }
    c.solver.validate().map_err(|e| BenchError::Config(e.to_string()))?;
    Ok(c)
}

fn bench(common: &Common) -> Result<()> {
    let config = resolve(common, true)?;
    config.validate()?;
    let records = run_scenario(&config)?;
    let art = write_run(&config, &records, &config.output_dir)?;
    let failed = records.iter().filter(|r| r.metrics.is_none()).count();
    println!(
        "{} records ({failed} failed) -> {}; {} plot files",
        records.len(),
        art.records.display(),
        art.plot_files.len()
    );
    Ok(())
}

fn fit(data: Option<&Path>, common: &Common) -> Result<()> {
    let mut config = resolve(common, false)?;
    if let Some(d) = data {
        config.dataset = Some(d.to_path_buf());
    }
    config.scenario = None;
    config.validate()?;
    let path = config.dataset.clone().expect("validated");
    let x = ingest_matrix(&path, Format::from_path(&path), config.transpose)?;
    println!("n={}, p={}", x.n(), x.p());
    let method = match config.methods.as_slice() {
        [m] => *m,
        _ if config.mngl.m == 1 => Method::Cgl,
        _ => Method::Mngl,
    };
    let result = fit_in_memory(&x, method, &config)?;
    let files = write_fit(&result, method, &x, &config, &config.output_dir)?;
    println!(
        "{method}: nll={:.6} after {} iterations (converged: {}); {} files in {}",
        result.state.nll,
        result.state.iterations,
        result.state.converged,
        files.len(),
        config.output_dir.display()
    );
    Ok(())
}

fn gen(index: usize, common: &Common) -> Result<()> {
    let config = resolve(common, true)?;
    let spec = config.scenario.as_ref().expect("resolved");
    spec.validate().map_err(|e| BenchError::Config(e.to_string()))?;
    if index >= spec.instance_count() {
        return Err(BenchError::Config(format!(
            "index {index} out of range for {} instances",
            spec.instance_count()
        )));
    }
    let inst = scenario_instance(spec, index)?;
    write_instance(&inst, &config.output_dir)?;
    println!(
        "instance {index}: n={}, p={}, k={}, m={}, sigma={} -> {}",
        inst.n,
        inst.p,
        inst.k,
        inst.m,
        inst.sigma,
        config.output_dir.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Bench(common) => bench(&common),
        Command::Fit { data, common } => fit(data.as_deref(), &common),
        Command::Gen { index, common } => gen(index, &common),
        Command::Score {
            fit,
            truth,
            edge_threshold,
        } => {
            let thr = edge_threshold.unwrap_or(SolverSettings::default().edge_threshold);
            let s = score_saved(&fit, &truth, thr)?;
            println!(
                "accuracy={:.4} f1={:.4} nmi={:.4} purity={:.4}",
                s.mean_accuracy, s.mean_f1, s.mean_nmi, s.mean_purity
            );
            Ok(())
        }
        Command::PlotData { records, out } => {
            let recs = read_jsonl(&records)?;
            let files = emit_plot_data(&recs, &out)?;
            write_aggregate(&out.join("aggregate.csv"), &mngl_bench::records::aggregate(&recs))?;
            println!("{} plot files in {}", files.len(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
