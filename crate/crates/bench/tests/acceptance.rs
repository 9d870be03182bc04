//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line to stderr.
//! Verdicts are asserted only when `ACCEPTANCE_STRICT=1`, so a failing
//! criterion is reported without hiding the rest of the suite.

use std::collections::BTreeSet;
use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use mngl_bench::config::{Method, RunConfig};
use mngl_bench::records::{mean_std, to_jsonl, ResultRecord};
use mngl_bench::run::run_scenario;
use mngl_core::cgl::{cgl_fit, cgl_solve_cov, h_update, HStep};
use mngl_core::glasso::{edge_set, glasso_solve, GlassoProblem};
use mngl_core::metrics::{align_components, edge_score, max_assignment, nmi, purity, ComponentEstimate};
use mngl_core::mngl::{mngl_fit, MnglConfig};
use mngl_core::model::mixture_nll;
use mngl_core::synthgen::{scenario_instance, ScenarioId, ScenarioSpec};
use mngl_core::{
    ClusterIndicator, Component, DMatrix, EmpiricalCovariance, MixtureState, NodePrecision, SolverSettings,
};
use proptest::prelude::*;
use proptest::test_runner::{Config as PtConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "ACCEPTANCE {id:>2} {verdict} {name}: {detail}");
    if std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        assert!(pass, "criterion {id} ({name}) failed: {detail}");
    }
}

fn rand_pd(p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::<f64>::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() / p as f64 + DMatrix::identity(p, p) * 0.5
}

fn max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

#[test]
fn c01_glasso_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut settings = SolverSettings::default();
    settings.tol = 1e-12;
    settings.max_inner_iters = 10_000;
    let mut worst_inv = 0.0f64;
    for _ in 0..20 {
        let s = rand_pd(10, &mut rng);
        let sol = glasso_solve(&GlassoProblem::with_lambda(EmpiricalCovariance::new(s.clone()).unwrap(), 0.0, settings.clone()))
            .unwrap();
        worst_inv = worst_inv.max(max_diff(sol.theta.values(), &s.clone().try_inverse().unwrap()));
    }
    let mut worst_diag = 0.0f64;
    for _ in 0..20 {
        let d: Vec<f64> = (0..10).map(|_| rng.random_range(0.2..3.0)).collect();
        let s = DMatrix::from_diagonal(&mngl_core::DVector::from_vec(d.clone()));
        let sol = glasso_solve(&GlassoProblem::with_lambda(EmpiricalCovariance::new(s).unwrap(), 0.3, settings.clone()))
            .unwrap();
        let expected = DMatrix::from_fn(10, 10, |i, j| if i == j { 1.0 / (d[i] + 0.3) } else { 0.0 });
        worst_diag = worst_diag.max(max_diff(sol.theta.values(), &expected));
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        "glasso oracle equivalence",
        worst_inv <= 1e-6 && worst_diag <= 1e-8 && secs < 5.0,
        &format!("max |Θ−S⁻¹| {worst_inv:.2e} (≤1e-6), diagonal max err {worst_diag:.2e} (≤1e-8), {secs:.2}s (<5s)"),
    );
}

#[test]
fn c02_cgl_degeneracy() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut settings = SolverSettings::default();
    settings.h_step = HStep::Frozen;
    let mut worst = 0.0f64;
    for i in 0..10 {
        let p = 4 + i % 5;
        let s = EmpiricalCovariance::new(rand_pd(p, &mut rng)).unwrap();
        let h = ClusterIndicator::new(DMatrix::identity(p, p)).unwrap();
        let t0 = NodePrecision::new(DMatrix::identity(p, p)).unwrap();
        let cgl = cgl_solve_cov(&s, p, &settings, &h, &t0).unwrap();
        let gl = glasso_solve(&GlassoProblem::with_lambda(s.clone(), settings.lambda, settings.clone())).unwrap();
        worst = worst.max(max_diff(cgl.theta_star.values(), gl.theta.values()));
        worst = worst.max(max_diff(cgl.h.values(), h.values()));
    }
    report(2, "CGL degeneracy", worst <= 1e-8, &format!("max diff over 10 instances {worst:.2e} (≤1e-8)"));
}

fn scaled_s1(seed: u64) -> mngl_core::synthgen::Instance {
    let spec = ScenarioSpec {
        n: 500,
        p: 30,
        k: 3,
        m: 2,
        sweep: vec![500.0],
        repeats: 1,
        seed,
        ..ScenarioSpec::default_for(ScenarioId::S1)
    };
    scenario_instance(&spec, 0).unwrap()
}

#[test]
fn c03_em_descent() {
    let start = Instant::now();
    let mut worst = f64::NEG_INFINITY;
    let mut shortest = usize::MAX;
    for h_step in [HStep::Coherent, HStep::Frozen] {
        for seed in 0..10 {
            let inst = scaled_s1(seed);
            let mut settings = SolverSettings::default();
            settings.h_step = h_step;
            settings.seed = seed;
            // A tight tolerance keeps EM running for the full 25 iterations.
            settings.tol = 1e-12;
            let mut config = MnglConfig::new(2, 3, settings);
            config.max_em_iters = 25;
            let fit = mngl_fit(&inst.data, &config).unwrap();
            shortest = shortest.min(fit.nll_trace.len());
            for w in fit.nll_trace.windows(2) {
                worst = worst.max(w[1] - w[0]);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        3,
        "EM descent",
        worst <= 1e-6 && shortest >= 20 && secs < 60.0,
        &format!(
            "largest per-step NLL increase {worst:.2e} (≤1e-6), shortest trace {shortest} (≥20), 10 seeds × coherent/frozen, {secs:.1}s (<60s)"
        ),
    );
}

#[test]
fn c04_single_component_reduction() {
    let mut worst = 0.0f64;
    let mut edges_equal = true;
    for seed in 0..5 {
        let inst = scaled_s1(100 + seed);
        let mut settings = SolverSettings::default();
        settings.seed = seed;
        let fit = mngl_fit(&inst.data, &MnglConfig::new(1, 3, settings.clone())).unwrap();
        let sol = cgl_fit(&inst.data, 3, &settings).unwrap();
        let state = MixtureState::new(vec![Component {
            phi: 1.0,
            h: sol.h.clone(),
            theta_star: sol.theta_star.clone(),
        }])
        .unwrap();
        let nll = mixture_nll(&inst.data, &state).unwrap();
        worst = worst.max((fit.state.nll - nll).abs());
        edges_equal &= edge_set(&fit.state.components[0].theta_star) == edge_set(&sol.theta_star);
    }
    report(
        4,
        "m=1 reduction",
        worst <= 1e-8 && edges_equal,
        &format!("max |ΔNLL| {worst:.2e} (≤1e-8), edge sets identical: {edges_equal}"),
    );
}

const BASELINES: [Method; 2] = [Method::KmeansCgl, Method::KmeansOnmtf];

fn s1_config() -> RunConfig {
    RunConfig {
        methods: vec![Method::Mngl, Method::KmeansCgl, Method::KmeansOnmtf],
        scenario: Some(ScenarioSpec::default_for(ScenarioId::S1)),
        ..RunConfig::default()
    }
}

struct S1Runs {
    first: Vec<ResultRecord>,
    second: Vec<ResultRecord>,
    first_secs: f64,
}

fn s1_runs() -> &'static S1Runs {
    static RUNS: OnceLock<S1Runs> = OnceLock::new();
    RUNS.get_or_init(|| {
        let start = Instant::now();
        let first = run_scenario(&s1_config()).unwrap();
        let first_secs = start.elapsed().as_secs_f64();
        let second = run_scenario(&s1_config()).unwrap();
        S1Runs {
            first,
            second,
            first_secs,
        }
    })
}

fn mean_metric(records: &[ResultRecord], method: Method, value: f64, metric: &str) -> f64 {
    let v: Vec<f64> = records
        .iter()
        .filter(|r| r.method == method && r.swept_value == value)
        .map(|r| r.metrics.map_or(0.0, |m| m.get(metric).unwrap()))
        .collect();
    mean_std(&v).0
}

#[test]
fn c05_recovery_at_full_scale() {
    let runs = s1_runs();
    let recs = &runs.first;
    let n2000: Vec<&ResultRecord> = recs.iter().filter(|r| r.swept_value == 2000.0).collect();
    let failures = n2000.iter().filter(|r| r.metrics.is_none()).count();
    let secs: f64 = n2000.iter().map(|r| r.wall_time_seconds).sum();
    let get = |m, metric| mean_metric(recs, m, 2000.0, metric);
    let (nmi_m, f1_m) = (get(Method::Mngl, "nmi"), get(Method::Mngl, "f1"));
    let beats = BASELINES
        .iter()
        .all(|&b| nmi_m > get(b, "nmi") && f1_m > get(b, "f1"));
    let floors = nmi_m >= 0.7 && f1_m >= 0.6;
    report(
        5,
        "recovery at full scale",
        beats && floors && failures == 0 && secs < 900.0,
        &format!(
            "n=2000 means over 10 seeds: mngl NMI {nmi_m:.3} F1 {f1_m:.3}; kmeans-cgl NMI {:.3} F1 {:.3}; kmeans-onmtf NMI {:.3} F1 {:.3}; floors NMI≥0.7 F1≥0.6; {failures} failed fits; fit time {secs:.0}s (<900s)",
            get(Method::KmeansCgl, "nmi"),
            get(Method::KmeansCgl, "f1"),
            get(Method::KmeansOnmtf, "nmi"),
            get(Method::KmeansOnmtf, "f1"),
        ),
    );
}

#[test]
fn c06_sample_size_insensitivity() {
    let recs = &s1_runs().first;
    let lo = mean_metric(recs, Method::Mngl, 200.0, "nmi");
    let hi = mean_metric(recs, Method::Mngl, 2000.0, "nmi");
    let curve: Vec<String> = [200.0, 500.0, 1000.0, 1500.0, 2000.0]
        .iter()
        .map(|&n| format!("{n}:{:.3}", mean_metric(recs, Method::Mngl, n, "nmi")))
        .collect();
    report(
        6,
        "sample-size insensitivity",
        (hi - lo).abs() < 0.15,
        &format!("mngl NMI n=200 {lo:.3} vs n=2000 {hi:.3}, |Δ| {:.3} (<0.15); curve {}", (hi - lo).abs(), curve.join(" ")),
    );
}

#[test]
fn c07_noise_degradation() {
    let config = RunConfig {
        methods: vec![Method::Mngl, Method::KmeansCgl, Method::KmeansOnmtf],
        scenario: Some(ScenarioSpec::default_for(ScenarioId::S2)),
        ..RunConfig::default()
    };
    let recs = run_scenario(&config).unwrap();
    let sigmas = [2.0, 3.0, 4.0, 5.0];
    let f1 = |m, s| mean_metric(&recs, m, s, "f1");
    let degrade = config.methods.iter().all(|&m| f1(m, 5.0) <= f1(m, 2.0) + 0.05);
    let dominate = sigmas
        .iter()
        .all(|&s| BASELINES.iter().all(|&b| f1(Method::Mngl, s) >= f1(b, s)));
    let table: Vec<String> = config
        .methods
        .iter()
        .map(|&m| {
            let row: Vec<String> = sigmas.iter().map(|&s| format!("{:.3}", f1(m, s))).collect();
            format!("{m} [{}]", row.join(" "))
        })
        .collect();
    report(
        7,
        "noise degradation",
        degrade && dominate,
        &format!(
            "mean F1 at σ=2,3,4,5: {}; F1(σ=5) ≤ F1(σ=2)+0.05 for all: {degrade}; mngl ≥ baselines at every σ: {dominate}",
            table.join("; ")
        ),
    );
}

fn brute_purity(pred: &[usize], truth: &[usize]) -> f64 {
    let mut total = 0;
    for c in pred.iter().collect::<BTreeSet<_>>() {
        let best = truth
            .iter()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(|t| pred.iter().zip(truth).filter(|(p, q)| *p == c && *q == t).count())
            .max()
            .unwrap();
        total += best;
    }
    total as f64 / pred.len() as f64
}

fn entropy_nmi(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let h = |x: &[usize]| {
        let mut counts = std::collections::BTreeMap::new();
        for v in x {
            *counts.entry(*v).or_insert(0.0) += 1.0;
        }
        -counts.values().map(|c: &f64| (c / n) * (c / n).ln()).sum::<f64>()
    };
    let mut joint = std::collections::BTreeMap::new();
    for (x, y) in a.iter().zip(b) {
        *joint.entry((*x, *y)).or_insert(0.0) += 1.0;
    }
    let (ha, hb) = (h(a), h(b));
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), c)| {
            let px = a.iter().filter(|&&v| v == x).count() as f64 / n;
            let py = b.iter().filter(|&&v| v == y).count() as f64 / n;
            (c / n) * ((c / n) / (px * py)).ln()
        })
        .sum();
    if ha == 0.0 || hb == 0.0 {
        0.0
    } else {
        mi / (ha * hb).sqrt()
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn c08_metric_unit_suite() {
    let mut failures: Vec<String> = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };
    let set = |v: &[(usize, usize)]| v.iter().cloned().collect::<BTreeSet<_>>();
    let truth7 = set(&[(0, 1), (0, 2), (1, 2), (1, 3), (2, 3), (2, 4), (3, 4)]);
    let s = edge_score(&truth7, &truth7).unwrap();
    check(s.accuracy == 1.0 && s.f1 == 1.0, "perfect detection");
    let all: Vec<(usize, usize)> = (0..8).flat_map(|a| (a + 1..8).map(move |b| (a, b))).collect();
    let truth10 = set(&all[..10]);
    let det12 = set(&[&all[..8], &all[10..14]].concat());
    let s = edge_score(&det12, &truth10).unwrap();
    check(
        (s.n_d, s.n_g, s.n_a) == (8, 10, 12) && s.accuracy == 0.8 && (s.f1 - 16.0 / 22.0).abs() < 1e-12,
        "n_d=8 n_g=10 n_a=12",
    );
    let s = edge_score(&set(&all[20..23]), &truth10).unwrap();
    check(s.accuracy == 0.0 && s.f1 == 0.0, "total miss");
    check(edge_score(&truth10, &BTreeSet::new()).is_err(), "empty truth rejected");
    for nd in 1..40usize {
        for extra in 0..5 {
            let (na, ng) = ((nd + extra) as f64, (nd + 2 * extra) as f64);
            let nd = nd as f64;
            let a = 2.0 * nd * nd / (na * nd + ng * nd);
            let b = 2.0 * nd / (na + ng);
            check((a - b).abs() < 1e-12, "F1 two-form identity");
        }
    }

    check(purity(&[1, 1, 0, 0], &[0, 0, 1, 1]).unwrap() == 1.0, "purity relabeled");
    check(purity(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap() == 0.5, "purity single cluster");
    let (p, t) = ([0, 0, 1, 1, 1], [0, 1, 1, 1, 0]);
    check(
        purity(&p, &t).unwrap() == 0.6 && brute_purity(&p, &t) == 0.6,
        "purity 0.6 contingency",
    );
    check(purity(&[0, 1], &[0]).is_err() && nmi(&[0, 1], &[0]).is_err(), "length mismatch");
    check((nmi(&[0, 0, 1, 1, 2], &[2, 2, 0, 0, 1]).unwrap() - 1.0).abs() < 1e-12, "nmi identical");
    check(nmi(&[0, 0, 0], &[0, 1, 2]).unwrap() == 0.0, "nmi single cluster");
    let (a6, b6) = ([0, 0, 1, 1, 2, 2], [0, 0, 0, 1, 1, 1]);
    check((nmi(&a6, &b6).unwrap() - entropy_nmi(&a6, &b6)).abs() < 1e-12, "nmi hand computation");
    check((nmi(&a6, &b6).unwrap() - nmi(&b6, &a6).unwrap()).abs() < 1e-12, "nmi symmetry");
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let xa: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..2)).collect();
    let xb: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..2)).collect();
    check(nmi(&xa, &xb).unwrap() < 0.05, "nmi independence");
    for _ in 0..200 {
        let len = rng.random_range(1..30);
        let pred: Vec<usize> = (0..len).map(|_| rng.random_range(0..4)).collect();
        let truth: Vec<usize> = (0..len).map(|_| rng.random_range(0..3)).collect();
        let perm = [2, 0, 3, 1];
        let relabeled: Vec<usize> = pred.iter().map(|&c| perm[c]).collect();
        check(
            purity(&pred, &truth).unwrap() == purity(&relabeled, &truth).unwrap()
                && (nmi(&pred, &truth).unwrap() - nmi(&relabeled, &truth).unwrap()).abs() < 1e-12,
            "relabeling invariance",
        );
        check((purity(&pred, &truth).unwrap() - brute_purity(&pred, &truth)).abs() < 1e-15, "purity brute force");
        check((nmi(&pred, &truth).unwrap() - entropy_nmi(&pred, &truth)).abs() < 1e-12, "nmi formula");
    }
    for m in 1..=4 {
        for _ in 0..50 {
            let w = DMatrix::<f64>::from_fn(m, m, |_, _| rng.random_range(0.0..2.0));
            let got = max_assignment(&w);
            let total = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| w[(i, j)]).sum::<f64>();
            let best = permutations(m).iter().map(|p| total(p)).fold(f64::MIN, f64::max);
            let mut sorted = got.clone();
            sorted.sort();
            check(sorted == (0..m).collect::<Vec<_>>(), "assignment is a permutation");
            check((total(&got) - best).abs() < 1e-9, "assignment matches enumeration");
        }
    }
    let inst = scaled_s1(808);
    let truth = &inst.truth;
    let est: Vec<ComponentEstimate> = (0..2)
        .rev()
        .map(|j| ComponentEstimate {
            h: truth.hs[j].values().clone(),
            network: truth.node_precision(j),
            edge_threshold: 1e-8,
        })
        .collect();
    check(align_components(&est, truth).unwrap() == vec![1, 0], "swapped order");
    check(align_components(&est[..1], &{
        let mut t = truth.clone();
        t.thetas.truncate(1);
        t.hs.truncate(1);
        t.labels.truncate(1);
        t.phi = vec![1.0];
        t
    })
    .unwrap()
        == vec![0], "m=1 identity");
    report(
        8,
        "metric unit suite",
        failures.is_empty(),
        &if failures.is_empty() {
            "edge, purity, NMI and alignment examples all exact".to_string()
        } else {
            format!("failed: {}", failures.join(", "))
        },
    );
}

#[test]
fn c09_zero_lock_and_nonnegativity() {
    let strategy = (2usize..10, 1usize..5, 2usize..12)
        .prop_filter("k <= p", |(p, k, _)| k <= p)
        .prop_flat_map(|(p, k, n)| {
            (
                prop::collection::vec(prop_oneof![Just(0.0), 0.0..2.0f64], p * k),
                prop::collection::vec(-3.0..3.0f64, n * p),
                prop::collection::vec(-2.0..2.0f64, k * k),
            )
                .prop_map(move |(h, x, t)| {
                    let t = DMatrix::from_vec(k, k, t);
                    (DMatrix::from_vec(p, k, h), DMatrix::from_vec(n, p, x), (&t + t.transpose()) * 0.5)
                })
        });
    let mut runner = TestRunner::new(PtConfig {
        cases: 1000,
        failure_persistence: None,
        ..PtConfig::default()
    });
    let outcome = runner.run(&strategy, |(h, x, t)| {
        let out = h_update(&h, &x, &t).map_err(|e| TestCaseError::fail(e.to_string()))?;
        for (a, b) in h.iter().zip(out.iter()) {
            prop_assert!(b.is_finite() && *b >= 0.0, "negative or non-finite entry {}", b);
            if *a == 0.0 {
                prop_assert_eq!(*b, 0.0);
            }
        }
        Ok(())
    });
    report(
        9,
        "zero lock-in and non-negativity",
        outcome.is_ok(),
        &match outcome {
            Ok(()) => "1000 randomized instances, zeros preserved and entries ≥ 0".to_string(),
            Err(e) => format!("{e}"),
        },
    );
}

#[test]
fn c10_determinism() {
    let runs = s1_runs();
    let strip = |r: &[ResultRecord]| to_jsonl(&r.iter().map(ResultRecord::without_timing).collect::<Vec<_>>());
    let (a, b) = (strip(&runs.first), strip(&runs.second));
    report(
        10,
        "determinism",
        a == b && runs.first.len() == 150,
        &format!(
            "two full S1 runs ({} records each, first took {:.0}s): raw records byte-identical without timing: {}",
            runs.first.len(),
            runs.first_secs,
            a == b
        ),
    );
}
