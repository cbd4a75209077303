//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.
//!
//! `cargo test --release -p subboot --test acceptance` runs everything; pass
//! criterion numbers (`-- 2 3`) to run a subset.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use common::*;
use subboot::bench::compare::run_budget_comparison;
use subboot::bench::config::ExperimentConfig;
use subboot::bench::report::Report;
use subboot::bench::verify::run_mse_verification;
use subboot::engines::{run_engine, EngineOptions, HyperParams, Method};
use subboot::estimators::{resolve_estimator, ColumnRoles};
use subboot::moments::TildeConstants;
use subboot::tuner::{blb_objective, calibrate_blb, optimal_general_blb, optimal_general_linear, pilot_grid, sb_objective};
use subboot::{Dataset, Estimator, SeedSpec};

type Outcome = Result<String, String>;

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn column(r: &Report, name: &str) -> Vec<f64> {
    (0..r.rows.len()).map(|i| r.value(i, name).unwrap_or(f64::NAN)).collect()
}

fn save(report: &Report, name: &str) -> PathBuf {
    let path = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    report.write(&path, subboot::bench::config::Format::Csv).expect("write report");
    path
}

// 1. Predicted over Monte-Carlo MSE across the grid, two generators.
fn mse_formula_fidelity() -> Outcome {
    let mut worst: (f64, String) = (1.0, String::new());
    let mut failures = Vec::new();
    for generator in ["normal", "centered-exponential"] {
        let cfg = ExperimentConfig::from_toml(&format!(
            r#"
seed = 101
[data]
generator = "{generator}"
n_rows = 10000
[verify]
methods = ["af", "tb", "blb", "sb", "sdb"]
replicates = 500
n_exponents = [0.4, 0.5, 0.6]
b = [25, 50]
r = [25, 50]
"#
        ))
        .map_err(|e| e.to_string())?;
        let report = run_mse_verification(&cfg, workers()).map_err(|e| e.to_string())?;
        let path = save(&report, &format!("acceptance-verify-{generator}.csv"));
        let status = report.column("status").unwrap();
        let method = report.column("method").unwrap();
        for (i, row) in report.rows.iter().enumerate() {
            let ratio = report.value(i, "ratio").unwrap_or(f64::NAN);
            let label = format!("{generator} {:?} n={:?} R={:?} B={:?}", row[method], report.value(i, "n"), report.value(i, "R"), report.value(i, "B"));
            if (ratio - 1.0).abs() > (worst.0 - 1.0).abs() {
                worst = (ratio, label.clone());
            }
            if !(0.8..=1.25).contains(&ratio) || row[status] != subboot::bench::report::Cell::text("ok") {
                failures.push(format!("{label}: ratio {ratio:.3}"));
            }
        }
        if report.rows.len() != 1 + 2 + 12 + 6 + 6 {
            failures.push(format!("{generator}: {} grid rows ({})", report.rows.len(), path.display()));
        }
    }
    let detail = format!("worst ratio {:.3} at {}", worst.0, worst.1);
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; out of band: {}", failures.join(", ")))
    }
}

/// E[(θ* − θ̄_sub)²] for the mean on `x` with subsamples of size 2, by
/// enumerating every ordered index pair and every size-N resample sequence.
fn enumerated_little_bootstrap_target(x: &[f64]) -> f64 {
    let big_n = x.len();
    let mut total = 0.0;
    let mut count = 0.0;
    for &a in x {
        for &b in x {
            let center = (a + b) / 2.0;
            for mask in 0..(1u32 << big_n) {
                let k = mask.count_ones() as f64;
                let theta = (k * a + (big_n as f64 - k) * b) / big_n as f64;
                total += (theta - center).powi(2);
                count += 1.0;
            }
        }
    }
    total / count
}

// 2. Conditional expectations on {1, 2, 3, 4}.
fn conditional_expectations() -> Outcome {
    let x = vec![1.0, 2.0, 3.0, 4.0];
    let mean = x.iter().sum::<f64>() / 4.0;
    let full_target = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0 / 4.0;
    let little_target = enumerated_little_bootstrap_target(&x);
    if (full_target - 0.3125).abs() > 1e-15 || (little_target - 0.15625).abs() > 1e-15 {
        return Err(format!("oracle targets {full_target}, {little_target}"));
    }
    let data = Dataset::univariate(x).map_err(|e| e.to_string())?;
    let est: Arc<dyn Estimator> = resolve_estimator("mean", &ColumnRoles::default(), &data).map_err(|e| e.to_string())?;
    let opts = EngineOptions { workers: workers(), ..EngineOptions::default() };
    let cases = [
        ("TB", Method::Tb, HyperParams::new(4, 1, 1_000_000), full_target),
        ("SB n=1", Method::Sb, HyperParams::new(1, 1_000_000, 1), full_target),
        ("SB n=2", Method::Sb, HyperParams::new(2, 1_000_000, 1), full_target),
        ("SB n=3", Method::Sb, HyperParams::new(3, 1_000_000, 1), full_target),
        ("SB n=4", Method::Sb, HyperParams::new(4, 1_000_000, 1), full_target),
        ("SDB n=2", Method::Sdb, HyperParams::new(2, 1_000_000, 1), little_target),
        ("BLB n=2", Method::Blb, HyperParams::new(2, 250_000, 4), little_target),
    ];
    let mut parts = Vec::new();
    let mut bad = Vec::new();
    for (k, (label, method, params, target)) in cases.into_iter().enumerate() {
        let v = run_engine(method, &data, &est, params, SeedSpec::new(2_000 + k as u64), &opts).map_err(|e| e.to_string())?;
        let rel = (v.scalar() - target).abs() / target;
        parts.push(format!("{label} {:.5} ({:+.2}%)", v.scalar(), 100.0 * (v.scalar() - target) / target));
        if rel > 0.015 {
            bad.push(label);
        }
    }
    let detail = parts.join(", ");
    if bad.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; outside 1.5%: {bad:?}"))
    }
}

// 3. Closed-form tuner against exhaustive grids.
fn tuner_vs_brute_force() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    let mut instances = 0;
    // BLB at a fixed subsample size: enumerate R, B ≤ 500.
    while instances < 25 {
        let gamma = if rng.random::<bool>() { 1.0 } else { 1.5 };
        let n = rng.random_range(100..3000usize);
        let t = TildeConstants { c1: rng.random_range(0.5..5.0), c2: rng.random_range(0.5..2.0), c3: rng.random_range(0.0..3.0) };
        let alpha1 = 10f64.powf(rng.random_range(-8.5..-6.0));
        let alpha2 = alpha1 * 10f64.powf(rng.random_range(0.0..2.5));
        let ng = (n as f64).powf(gamma);
        let b_star = (t.c1 * alpha2 / (t.c2 * alpha1)).sqrt() * (n as f64).powf(1.0 - gamma / 2.0);
        if !(1.0..=450.0).contains(&b_star) {
            continue;
        }
        let c_max = rng.random_range(20.0..400.0) * (alpha1 * ng * b_star + alpha2 * n as f64);
        instances += 1;
        let tuned = optimal_general_blb(&t, alpha1, alpha2, c_max, 1_000_000, Some(n), gamma).map_err(|e| e.to_string())?;
        let p = tuned.params;
        let time = alpha1 * ng * (p.r * p.b) as f64 + alpha2 * (n * p.r) as f64;
        assert!(time <= c_max * (1.0 + 1e-9), "BLB time {time} over budget {c_max}");
        let varying = |r: f64, b: f64| blb_objective(&t, n as f64, r, b) - t.c3 / (n as f64 * n as f64);
        let mut best = f64::INFINITY;
        for b in 1..=500usize {
            let r = ((c_max / (alpha1 * ng * b as f64 + alpha2 * n as f64)).floor() as usize).min(500);
            if r >= 1 {
                best = best.min(varying(r as f64, b as f64));
            }
        }
        let gap = varying(p.r as f64, p.b as f64) / best - 1.0;
        worst = worst.max(gap);
        if gap > 0.02 {
            bad.push(format!("BLB n={n} R={} B={}: +{:.2}%", p.r, p.b, 100.0 * gap));
        }
    }
    // SB and SDB: enumerate n ≤ N and R ≤ 500.
    for k in 0..25 {
        let method = if k % 2 == 0 { Method::Sdb } else { Method::Sb };
        let gamma = [1.0, 1.5, 2.0][k % 3];
        let n_star = rng.random_range(20.0..200.0f64);
        let r_star = rng.random_range(40.0..400.0f64);
        let c2p = rng.random_range(0.5..5.0);
        let c1p = 2.0 * r_star * c2p / (gamma * n_star * n_star);
        let alpha = 10f64.powf(rng.random_range(-8.0..-6.0));
        let c_max = alpha * r_star * n_star.powf(gamma);
        let big_n = rng.random_range(1000..5000usize);
        let tuned = optimal_general_linear(method, c1p, c2p, alpha, c_max, big_n, gamma, false).map_err(|e| e.to_string())?;
        let p = tuned.params;
        let time = alpha * (p.n as f64).powf(gamma) * p.r as f64;
        assert!(time <= c_max * (1.0 + 1e-9), "{method} time {time} over budget {c_max}");
        let mut best = f64::INFINITY;
        for n in 1..=big_n {
            let r = ((c_max / (alpha * (n as f64).powf(gamma))).floor() as usize).min(500);
            if r >= 1 {
                best = best.min(sb_objective(c1p, c2p, n as f64, r as f64));
            }
        }
        let gap = sb_objective(c1p, c2p, p.n as f64, p.r as f64) / best - 1.0;
        worst = worst.max(gap);
        if gap > 0.02 {
            bad.push(format!("{method} n={} R={}: +{:.2}%", p.n, p.r, 100.0 * gap));
        }
    }
    let detail = format!("50 instances, largest excess over grid minimum {:.3}%", 100.0 * worst);
    if bad.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", bad.join(", ")))
    }
}

// 4. Tuned against original hyperparameters at equal wall-clock budget.
fn tuned_beats_original() -> Outcome {
    let cfg = ExperimentConfig::from_toml(
        r#"
seed = 404
[data]
generator = "linear"
n_rows = 100000
[estimator]
name = "ols"
[engine]
source = "disk"
[compare]
repeats = 20
settings = 6
r_range = [2.0, 6.0]
b_range = [600.0, 1200.0]
methods = ["blb", "sdb"]
"#,
    )
    .map_err(|e| e.to_string())?;
    let report = run_budget_comparison(&cfg, workers()).map_err(|e| e.to_string())?;
    let path = save(&report, "acceptance-compare.csv");
    let k1 = column(&report, "κ1");
    let k4 = column(&report, "κ4");
    let times: Vec<f64> = column(&report, "time κ1").into_iter().chain(column(&report, "time κ4")).collect();
    let below = |v: &[f64]| v.iter().filter(|&&x| x < 1.0).count();
    let mean_k1 = k1.iter().sum::<f64>() / k1.len() as f64;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
    let detail = format!(
        "κ1 [{}] mean {mean_k1:.3}; κ4 [{}]; time ratios {:.3}..{:.3}; report {}",
        fmt(&k1),
        fmt(&k4),
        times.iter().cloned().fold(f64::INFINITY, f64::min),
        times.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        path.display()
    );
    let mut bad = Vec::new();
    if k1.len() != 6 || below(&k1) < 5 {
        bad.push(format!("κ1 < 1 in {} of {}", below(&k1), k1.len()));
    }
    if !(mean_k1 <= 0.9) {
        bad.push("mean κ1 above 0.9".to_string());
    }
    if k4.len() != 6 || below(&k4) < 5 {
        bad.push(format!("κ4 < 1 in {} of {}", below(&k4), k4.len()));
    }
    if !times.iter().all(|t| (0.85..=1.15).contains(t)) {
        bad.push("time ratio outside [0.85, 1.15]".to_string());
    }
    if bad.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", bad.join("; ")))
    }
}

// 5. Cost-coefficient recovery from noisy synthetic timers.
fn calibration_recovery() -> Outcome {
    let fit = |(alpha1, alpha2, gamma, n): (f64, f64, f64, usize), seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(505 + seed);
        let points = pilot_grid(n, 12, SeedSpec::new(55 + seed));
        calibrate_blb(&points, gamma, 3, |n, r, b| {
            let exact = alpha1 * (n as f64).powf(gamma) * (r * b) as f64 + alpha2 * (n * r) as f64;
            let z: f64 = rng.sample(StandardNormal);
            Ok(exact * (1.0 + 0.02 * z))
        })
        .map(|f| (f.alpha1 / alpha1 - 1.0, f.alpha2 / alpha2 - 1.0, f.r_squared))
    };
    let ok = |(e1, e2, q): (f64, f64, f64)| e1.abs() <= 0.05 && e2.abs() <= 0.05 && q >= 0.98;
    let mut parts = Vec::new();
    let mut bad = Vec::new();
    let instances = [(2e-8, 1e-6, 1.0, 3162usize), (1e-7, 5e-6, 1.0, 1000), (5e-9, 1e-6, 1.5, 500), (4e-8, 8e-6, 1.0, 5000)];
    for (k, &inst) in instances.iter().enumerate() {
        let (e1, e2, q) = fit(inst, k as u64).map_err(|e| e.to_string())?;
        // How often other noise draws would pass, for context.
        let rate = (1000..1200).filter(|&s| fit(inst, s).is_ok_and(ok)).count() as f64 / 200.0;
        parts.push(format!("α1 {:+.2}% α2 {:+.2}% R² {:.4} (pass rate {:.0}%)", 100.0 * e1, 100.0 * e2, q, 100.0 * rate));
        if !ok((e1, e2, q)) {
            bad.push(k);
        }
    }
    let detail = parts.join("; ");
    if bad.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; failing instances {bad:?}"))
    }
}

const DETERMINISM_CONFIGS: [(&str, &str); 5] = [
    (
        "calibrate",
        r#"
[data]
generator = "linear"
n_rows = 4000
[estimator]
name = "ols"
[engine]
timing = { kind = "virtual" }
[calibrate]
pilot_r = 20
cost_model_out = "COST_MODEL_OUT"
"#,
    ),
    (
        "tune",
        r#"
[data]
generator = "logistic"
n_rows = 20000
[estimator]
name = "logit1"
[cost_model]
alpha1 = 1.2e-7
alpha2 = 4e-7
alpha_sdb = 1.5e-7
alpha_sb = 1e-7
[tune]
c_max = 3.0
"#,
    ),
    (
        "verify-mse",
        r#"
[data]
generator = "centered-exponential"
n_rows = 2000
[verify]
replicates = 40
b = [10]
r = [10]
"#,
    ),
    (
        "compare",
        r#"
[data]
generator = "linear"
n_rows = 3000
[estimator]
name = "ols"
[engine]
timing = { kind = "virtual" }
[calibrate]
pilot_r = 20
[compare]
repeats = 3
originals = [[20, 300], [30, 200]]
"#,
    ),
    (
        "run",
        r#"
[data]
generator = "logistic"
n_rows = 5000
[estimator]
name = "logit1"
[engine]
timing = { kind = "virtual" }
[run]
method = "blb"
r = 10
b = 20
"#,
    ),
];

// 6. Byte-identical reports across repeated runs and worker counts.
fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut summary = Vec::new();
    for (verb, text) in DETERMINISM_CONFIGS {
        let cost_out = dir.path().join("cost.toml");
        let path = dir.path().join(format!("{verb}.toml"));
        std::fs::write(&path, format!("seed = 606\n{}", text.replace("COST_MODEL_OUT", &cost_out.display().to_string()))).map_err(|e| e.to_string())?;
        let mut outputs = Vec::new();
        for workers in [1, 8, 1, 8] {
            let out = Command::new(env!("CARGO_BIN_EXE_subboot"))
                .arg(verb)
                .arg(&path)
                .args(["--workers", &workers.to_string(), "--format", "csv"])
                .output()
                .map_err(|e| e.to_string())?;
            if !out.status.success() {
                return Err(format!("{verb} failed: {}", String::from_utf8_lossy(&out.stderr)));
            }
            outputs.push(out.stdout);
        }
        if outputs.iter().any(|o| o != &outputs[0]) {
            return Err(format!("{verb}: reports differ across runs or worker counts"));
        }
        summary.push(format!("{verb} ({} bytes)", outputs[0].len()));
    }
    Ok(summary.join(", "))
}

fn check<S: Strategy>(name: &str, cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), String>) -> Result<String, String> {
    let mut runner = TestRunner::new_with_rng(Config { cases, failure_persistence: None, ..Config::default() }, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner
        .run(&strategy, |v| test(v).map_err(TestCaseError::fail))
        .map(|_| format!("{name} {cases}/{cases}"))
        .map_err(|e| format!("{name}: {e}"))
}

// 7. Invariants over random inputs.
fn properties() -> Outcome {
    let names = || prop::sample::select(ESTIMATORS.to_vec());
    let mut parts = Vec::new();
    parts.push(check("duplication", 200, (names(), 0u64..10_000, prop::collection::vec(0u32..4, 10..60)), |(name, seed, counts)| {
        duplication_equivalence(&case(name, counts.len(), seed), &counts)
    })?);
    parts.push(check(
        "psd",
        200,
        (names(), prop::sample::select(vec![Method::Tb, Method::Blb, Method::Sb, Method::Sdb]), 0u64..10_000, 20usize..150, 1usize..8, 1usize..8),
        |(name, method, seed, n, r, b)| engine_psd(&case(name, 200, seed), method, HyperParams::new(n, r, b), seed),
    )?);
    parts.push(check("monotonicity", 500, (1usize..5, 0u64..10_000, 100usize..1_000_000, 0.001f64..0.999, 1usize..2000, 1usize..2000), |(p, seed, big_n, frac, r, b)| {
        mse_monotone(&random_constants(p, seed), big_n, ((big_n as f64 * frac) as usize).max(1), r, b)
    })?);
    parts.push(check("sdb=blb(B=1)", 200, (names(), 0u64..10_000, 5usize..150, 1usize..300), |(name, seed, n, r)| {
        sdb_is_blb_with_one_resample(&case(name, 150, seed), n, r, seed)
    })?);
    parts.push(check(
        "scale invariance",
        500,
        (0.1f64..10.0, 0.1f64..10.0, 0.0f64..10.0, 1e-9f64..1e-6, 0.1f64..100.0, 1.0f64..50.0, 1e-3f64..1e3),
        |(c1, c2, c3, alpha1, ratio, c_max, lambda)| {
            tuner_scale_invariant(&TildeConstants { c1, c2, c3 }, c1, c2 + c3, alpha1, alpha1 * ratio, c_max, 100_000, 1.0, lambda)
        },
    )?);
    Ok(parts.join(", "))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("MSE formula fidelity", mse_formula_fidelity),
        ("conditional-expectation oracles", conditional_expectations),
        ("tuner vs brute force", tuner_vs_brute_force),
        ("tuned beats original", tuned_beats_original),
        ("calibration recovery", calibration_recovery),
        ("determinism", determinism),
        ("property suite", properties),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let number = k + 1;
        if !selected.is_empty() && !selected.contains(&number) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {number} PASS {name} [{secs:.0}s]: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {number} FAIL {name} [{secs:.0}s]: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
