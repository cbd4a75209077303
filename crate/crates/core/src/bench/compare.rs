//! Equal-budget comparison of tuned and original hyperparameters.
//!
//! For each original BLB setting (n = ⌊N^0.7⌋, random R and B) the measured
//! BLB time fixes the budget C_max. Original SDB/SB get the same n with R from
//! that budget; BLB*, SDB* and SB* come from the tuner under the same budget.
//! Accuracy is the mean Frobenius distance to a reference covariance.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::calibrate::{calibrate_cost_model, estimator_moments};
use crate::bench::generate::{generate_data, Generator};
use crate::engines::{run_engine, EngineOptions, HyperParams, Method, Timing};
use crate::error::{Error, Result};
use crate::estimators::{Dataset, Estimator, LogisticOneStep};
use crate::moments::MomentConstants;
use crate::sampling::SeedSpec;
use crate::tuner::{default_blb_n, optimal_general_blb, optimal_general_linear, CostModel};

use super::config::{ExperimentConfig, TruthKind};
use super::report::{format_float, Cell, Report};

/// Tuned and original variants of each method, in report order.
const VARIANTS: [(Method, bool); 6] = [
    (Method::Blb, false),
    (Method::Blb, true),
    (Method::Sdb, false),
    (Method::Sdb, true),
    (Method::Sb, false),
    (Method::Sb, true),
];

/// (numerator, denominator) variant indices of κ1..κ5.
const KAPPAS: [(usize, usize); 5] = [(1, 0), (3, 2), (5, 4), (1, 3), (1, 5)];

fn variant_label(method: Method, tuned: bool) -> String {
    if tuned {
        format!("{}*", method.label())
    } else {
        method.label().to_string()
    }
}

/// Report columns; the κ and time-ratio headings follow the usual table layout.
pub fn comparison_columns() -> Vec<String> {
    let mut cols: Vec<String> = ["setting", "R", "B", "seed", "c_max"].iter().map(|s| s.to_string()).collect();
    cols.extend((1..=5).map(|k| format!("κ{k}")));
    cols.extend((1..=5).map(|k| format!("time κ{k}")));
    cols.extend(VARIANTS.iter().map(|&(m, t)| format!("mse {}", variant_label(m, t))));
    cols.extend(VARIANTS.iter().map(|&(m, t)| format!("time {}", variant_label(m, t))));
    cols.extend(["R SDB", "R SB", "R BLB*", "B BLB*", "n SDB*", "R SDB*", "n SB*", "R SB*", "status"].iter().map(|s| s.to_string()));
    cols
}

/// Draws `count` originals (R, B) from ⌊U(r_lo, r_hi)⌋ × ⌊U(b_lo, b_hi)⌋.
pub fn draw_originals(count: usize, r_range: [f64; 2], b_range: [f64; 2], seed: SeedSpec) -> Vec<(usize, usize)> {
    let mut s = seed.child("originals", 0).stream(0, 0);
    (0..count)
        .map(|_| {
            let r = s.random_range(r_range[0]..r_range[1]).floor() as usize;
            let b = s.random_range(b_range[0]..b_range[1]).floor() as usize;
            (r.max(1), b.max(1))
        })
        .collect()
}

pub fn frobenius_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn median(v: &[f64]) -> f64 {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().map_err(|e| Error::Config(e.to_string()))
}

/// Average inverse information Σ_m {Σ_i ω_i(β̂) x_i x_iᵀ}⁻¹ / M0 over fresh
/// logistic datasets, β̂ the maximum-likelihood fit of each.
pub fn logistic_truth(big_n: usize, replicates: usize, seed: SeedSpec, workers: usize) -> Result<Vec<f64>> {
    let one = |k: usize| -> Result<Vec<f64>> {
        let data = generate_data(Generator::Logistic, big_n, 1, seed.child("truth", k as u64))?;
        let est = LogisticOneStep::new(&data, &["x0".into(), "x1".into()], "y")?;
        let ones = vec![1.0; big_n];
        let beta = est.fit(&data.view(&ones)?)?;
        let mut info = DMatrix::<f64>::zeros(2, 2);
        for i in 0..big_n {
            let row = data.row(i);
            let p = 1.0 / (1.0 + (-(row[0] * beta[0] + row[1] * beta[1])).exp());
            let w = p * (1.0 - p);
            for a in 0..2 {
                for b in 0..2 {
                    info[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        let inv = info.try_inverse().ok_or(Error::RankDeficient("logistic information matrix"))?;
        Ok(inv.transpose().as_slice().to_vec())
    };
    let mats: Vec<Vec<f64>> = pool(workers)?.install(|| (0..replicates).into_par_iter().map(one).collect::<Result<_>>())?;
    let mut out = vec![0.0; 4];
    for m in &mats {
        for (o, v) in out.iter_mut().zip(m) {
            *o += v / replicates as f64;
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct CachedTruth {
    fingerprint: String,
    matrix: Vec<f64>,
}

/// Large-B traditional bootstrap on `data`, cached at `cache` when given.
pub fn bootstrap_truth(
    data: &Dataset,
    est: &Arc<dyn Estimator>,
    replicates: usize,
    seed: SeedSpec,
    workers: usize,
    cache: Option<&Path>,
    fingerprint: &str,
) -> Result<Vec<f64>> {
    if let Some(path) = cache.filter(|p| p.exists()) {
        let text = std::fs::read_to_string(path)?;
        match serde_json::from_str::<CachedTruth>(&text) {
            Ok(c) if c.fingerprint == fingerprint => return Ok(c.matrix),
            _ => log::warn!("ignoring stale truth cache {}", path.display()),
        }
    }
    let opts = EngineOptions { workers, ..EngineOptions::default() };
    let matrix = run_engine(Method::Tb, data, est, HyperParams::new(data.n_rows(), 1, replicates), seed.child("truth", 0), &opts)?.matrix;
    if let Some(path) = cache {
        let text = serde_json::to_string_pretty(&CachedTruth { fingerprint: fingerprint.into(), matrix: matrix.clone() }).expect("json");
        std::fs::write(path, text).map_err(|source| Error::Write { path: path.to_path_buf(), source })?;
    }
    Ok(matrix)
}

struct Repeat {
    data: Dataset,
    est: Arc<dyn Estimator>,
    opts: EngineOptions,
    moments: MomentConstants,
}

#[derive(Default)]
struct VariantRuns {
    distances: Vec<f64>,
    seconds: Vec<f64>,
    errors: Vec<String>,
    first: Option<HyperParams>,
}

impl VariantRuns {
    fn record(&mut self, params: Option<HyperParams>, outcome: Result<(f64, f64)>) {
        if self.first.is_none() {
            self.first = params;
        }
        match outcome {
            Ok((d, t)) => {
                self.distances.push(d);
                self.seconds.push(t);
            }
            Err(e) => self.errors.push(e.to_string()),
        }
    }

    fn mse(&self) -> Option<f64> {
        (!self.distances.is_empty()).then(|| self.distances.iter().sum::<f64>() / self.distances.len() as f64)
    }

    fn time(&self) -> Option<f64> {
        (!self.seconds.is_empty()).then(|| self.seconds.iter().sum::<f64>() / self.seconds.len() as f64)
    }
}

fn ratio(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) if b > 0.0 => Some(a / b),
        _ => None,
    }
}

pub fn describe_cost_model(m: &CostModel) -> String {
    let f = |v: Option<f64>| v.map_or("-".to_string(), format_float);
    format!(
        "alpha1 = {}, alpha2 = {}, alpha_sdb = {}, alpha_sb = {}, gamma = {}, R^2 = {}, pilot = {}s",
        f(m.alpha1),
        f(m.alpha2),
        f(m.alpha_sdb),
        f(m.alpha_sb),
        format_float(m.gamma),
        f(m.fit_quality),
        format_float(m.pilot_seconds)
    )
}

/// Parameters of one variant on one repeat.
fn variant_params(
    method: Method,
    tuned: bool,
    original: (usize, usize),
    budget: f64,
    c_max: f64,
    big_n: usize,
    model: &CostModel,
    moments: &MomentConstants,
    cfg: &ExperimentConfig,
) -> Result<HyperParams> {
    let n0 = default_blb_n(big_n);
    let gamma = model.gamma;
    if tuned && budget <= 0.0 {
        return Err(Error::InfeasibleBudget { c_max: budget, minimal: 0.0 });
    }
    let original_params = match method {
        Method::Blb => HyperParams::new(n0, original.0, original.1),
        _ => {
            let alpha = model.linear_alpha(method)?;
            let r = (c_max / (alpha * (n0 as f64).powf(gamma))).floor() as usize;
            HyperParams::new(n0, r.max(1), 1)
        }
    };
    if !tuned || cfg.compare.force_original {
        return Ok(original_params);
    }
    Ok(match method {
        Method::Blb => {
            let (a1, a2) = model.blb_alphas()?;
            optimal_general_blb(&moments.tuner_constants()?, a1, a2, budget, big_n, cfg.tune.n, gamma)?.params
        }
        _ => {
            let (c1p, c2p) = moments.sb_constants();
            optimal_general_linear(method, c1p, c2p, model.linear_alpha(method)?, budget, big_n, gamma, cfg.tune.paper_literal)?.params
        }
    })
}

/// Runs the comparison protocol and tabulates κ1..κ5 with time ratios.
pub fn run_budget_comparison(cfg: &ExperimentConfig, workers: usize) -> Result<Report> {
    let cc = &cfg.compare;
    if !cc.methods.contains(&Method::Blb) {
        return Err(Error::Config("the comparison needs BLB: its measured time sets the budget".into()));
    }
    if let Some(m) = cc.methods.iter().find(|m| !matches!(m, Method::Blb | Method::Sdb | Method::Sb)) {
        return Err(Error::Config(format!("{m} has no tuned counterpart to compare")));
    }
    let seed = cfg.seed();
    let generator = cfg.generator()?;
    let parallel_runs = matches!(cfg.engine.timing, Timing::Virtual(_));
    if !parallel_runs && workers > 1 {
        log::info!("wall-clock timing: engine runs execute one at a time; {workers} workers used for data and truth only");
    }
    let pool = pool(workers)?;

    let repeats: Vec<Repeat> = pool.install(|| {
        (0..cc.repeats)
            .into_par_iter()
            .map(|m| {
                let index = if generator.is_some() { m as u64 } else { 0 };
                let data = cfg.load_data(seed, index)?.data;
                let est = cfg.estimator(&data)?;
                let moments = estimator_moments(&est, &data)?;
                let opts = cfg.engine_options(&data, 1)?;
                Ok(Repeat { data, est, opts, moments })
            })
            .collect::<Result<_>>()
    })?;
    let description = cfg.load_data(seed, 0)?.description;
    let first = &repeats[0];
    let big_n = first.data.n_rows();
    let n0 = default_blb_n(big_n);

    let truth_kind = match (cc.truth, generator) {
        (Some(k), _) => k,
        (None, Some(Generator::Logistic)) => TruthKind::MonteCarlo,
        (None, Some(_)) => TruthKind::Analytic,
        (None, None) => TruthKind::Bootstrap,
    };
    let truth = match truth_kind {
        TruthKind::Analytic => match generator {
            Some(Generator::Linear) => {
                let d = first.est.output_dim();
                (0..d * d).map(|k| if k % (d + 1) == 0 { 1.0 / big_n as f64 } else { 0.0 }).collect()
            }
            Some(g) if g.population_moments().is_some() && cfg.estimator.name == "mean" => {
                let d = first.est.output_dim();
                let var = g.population_moments().expect("checked").1;
                (0..d * d).map(|k| if k % (d + 1) == 0 { var / big_n as f64 } else { 0.0 }).collect()
            }
            _ => return Err(Error::Config("an analytic reference covariance exists only for the linear and univariate generators".into())),
        },
        TruthKind::MonteCarlo => match generator {
            Some(Generator::Logistic) => logistic_truth(big_n, cc.truth_replicates.unwrap_or(2000), seed, workers)?,
            _ => return Err(Error::Config("the Monte-Carlo reference covariance is defined for the logistic generator".into())),
        },
        TruthKind::Bootstrap => {
            let b = cc.truth_replicates.unwrap_or(10_000);
            let fingerprint = format!("{description}|{}|B={b}|seed={}", cfg.estimator.name, cfg.seed);
            bootstrap_truth(&first.data, &first.est, b, seed, workers, cc.truth_cache.as_deref(), &fingerprint)?
        }
    };

    let model = match cfg.cost_model()? {
        Some(m) => m,
        None => {
            let originals = cc.originals.clone().unwrap_or_else(|| draw_originals(cc.settings, cc.r_range, cc.b_range, seed));
            let median_original = |m: &CostModel| -> Result<f64> {
                let times: Vec<f64> = originals.iter().map(|&(r, b)| m.predict_time(Method::Blb, &HyperParams::new(n0, r, b))).collect::<Result<_>>()?;
                Ok(median(&times))
            };
            calibrate_cost_model(&first.data, &first.est, &first.opts, &cfg.calibrate, &median_original, seed)?.model
        }
    };
    model.blb_alphas()?;
    for &m in &cc.methods {
        if m != Method::Blb {
            model.linear_alpha(m)?;
        }
    }

    let originals = cc.originals.clone().unwrap_or_else(|| draw_originals(cc.settings, cc.r_range, cc.b_range, seed));
    let c0_share = model.pilot_seconds / (originals.len() * cc.repeats).max(1) as f64;

    let mut report = Report { title: "Equal-budget comparison".into(), columns: comparison_columns(), ..Report::default() };
    report
        .meta("seed", cfg.seed)
        .meta("data", &description)
        .meta("estimator", cfg.estimator.name.clone())
        .meta("repeats", cc.repeats)
        .meta("n", n0)
        .meta("truth", format!("{truth_kind:?}"))
        .meta("timing", if parallel_runs { "virtual" } else { "wall" })
        .meta("cost model", describe_cost_model(&model))
        .meta("pilot seconds per tuned run", format_float(c0_share))
        .meta("rng", crate::sampling::GENERATOR)
        .meta("multinomial", crate::sampling::MULTINOMIAL_METHOD)
        .meta("version", env!("CARGO_PKG_VERSION"));
    report.config = Some(cfg.to_toml());

    let wanted: Vec<usize> = (0..VARIANTS.len()).filter(|&i| cc.methods.contains(&VARIANTS[i].0)).collect();
    for (s, &(r_orig, b_orig)) in originals.iter().enumerate() {
        let setting_seed = seed.child("setting", s as u64);
        let run_variant = |i: usize, m: usize, params: HyperParams| -> Result<(f64, f64)> {
            let rep = &repeats[m];
            let (method, tuned) = VARIANTS[i];
            let engine_seed = setting_seed.child("repeat", m as u64).child(&variant_label(method, tuned), 0);
            let v = run_engine(method, &rep.data, &rep.est, params, engine_seed, &rep.opts)?;
            Ok((frobenius_distance(&v.matrix, &truth), v.seconds))
        };
        let over_repeats = |f: &(dyn Fn(usize) -> (Option<HyperParams>, Result<(f64, f64)>) + Sync)| -> Vec<(Option<HyperParams>, Result<(f64, f64)>)> {
            if parallel_runs {
                pool.install(|| (0..cc.repeats).into_par_iter().map(f).collect())
            } else {
                (0..cc.repeats).map(f).collect()
            }
        };

        let mut runs: Vec<VariantRuns> = (0..VARIANTS.len()).map(|_| VariantRuns::default()).collect();
        let blb_params = HyperParams::new(n0, r_orig, b_orig);
        for (p, out) in over_repeats(&|m| (Some(blb_params), run_variant(0, m, blb_params))) {
            runs[0].record(p, out);
        }
        let mut status = Vec::new();
        let c_max = if runs[0].seconds.is_empty() {
            status.push(format!("original BLB failed: {}", runs[0].errors.first().cloned().unwrap_or_default()));
            None
        } else {
            Some(median(&runs[0].seconds))
        };

        if let Some(c_max) = c_max {
            let budget = c_max - c0_share;
            if budget <= 0.0 {
                status.push(format!("pilot cost {} per run exhausts the budget", format_float(c0_share)));
            }
            for &i in wanted.iter().filter(|&&i| i != 0) {
                let (method, tuned) = VARIANTS[i];
                let outcomes = over_repeats(&|m| {
                    match variant_params(method, tuned, (r_orig, b_orig), budget, c_max, big_n, &model, &repeats[m].moments, cfg) {
                        Ok(p) => (Some(p), run_variant(i, m, p)),
                        Err(e) => (None, Err(e)),
                    }
                });
                for (p, out) in outcomes {
                    runs[i].record(p, out);
                }
                if !runs[i].errors.is_empty() {
                    status.push(format!("{}: {} of {} runs failed ({})", variant_label(method, tuned), runs[i].errors.len(), cc.repeats, runs[i].errors[0]));
                }
                if tuned {
                    if let Some(t) = runs[i].time().filter(|&t| t > 1.15 * c_max) {
                        log::warn!("{} used {t:.3}s against a budget of {c_max:.3}s", variant_label(method, tuned));
                        status.push(format!("{} over budget", variant_label(method, tuned)));
                    }
                }
            }
        }

        let mse: Vec<Option<f64>> = runs.iter().map(VariantRuns::mse).collect();
        let time: Vec<Option<f64>> = runs.iter().map(VariantRuns::time).collect();
        let param = |i: usize, f: fn(&HyperParams) -> usize| runs[i].first.as_ref().map_or(Cell::Empty, |p| Cell::from(f(p)));
        let mut row: Vec<Cell> = vec![s.into(), r_orig.into(), b_orig.into(), Cell::text(setting_seed.root_seed.to_string()), Cell::opt(c_max)];
        row.extend(KAPPAS.iter().map(|&(a, b)| Cell::opt(ratio(mse[a], mse[b]))));
        row.extend(KAPPAS.iter().map(|&(a, b)| Cell::opt(ratio(time[a], time[b]))));
        row.extend(mse.iter().map(|&v| Cell::opt(v)));
        row.extend(time.iter().map(|&v| Cell::opt(v)));
        row.extend([
            param(2, |p| p.r),
            param(4, |p| p.r),
            param(1, |p| p.r),
            param(1, |p| p.b),
            param(3, |p| p.n),
            param(3, |p| p.r),
            param(5, |p| p.n),
            param(5, |p| p.r),
        ]);
        row.push(Cell::text(if status.is_empty() { "ok".into() } else { status.join("; ") }));
        report.push(row);
    }
    report.notes.push("tuned hyperparameters shown are those of the first repeat".into());
    Ok(report)
}
