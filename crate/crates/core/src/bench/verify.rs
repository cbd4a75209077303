//! Monte-Carlo check of the MSE model: predicted over empirical MSE of SE²
//! for the sample mean, over a grid of (n, R, B).

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::engines::{run_engine, EngineOptions, HyperParams, Method};
use crate::error::{Error, Result};
use crate::estimators::{evaluate_full, Dataset, Estimator, MeanEstimator};
use crate::moments::{central_moments, MomentConstants, KURTOSIS_FLOOR};
use crate::msemodel::{empirical_mse, guarded_ratio, monte_carlo_truth, predict_mse, ModelParams};
use crate::tuner::subsample_size;

use super::config::ExperimentConfig;
use super::report::{Cell, Report};

/// One (method, n, R, B) cell of the verification grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct GridCell {
    pub method: Method,
    pub params: (usize, usize, usize),
}

/// Grid cells in table order, already normalized for each method.
pub fn verification_grid(cfg: &ExperimentConfig, big_n: usize) -> Result<Vec<GridCell>> {
    let v = &cfg.verify;
    let ns: Vec<usize> = v.n_exponents.iter().map(|&e| subsample_size(big_n, e)).collect();
    let mut cells = Vec::new();
    for &method in &v.methods {
        let raw: Vec<HyperParams> = match method {
            Method::Af => vec![HyperParams::new(big_n, 1, 1)],
            Method::Tb => v.b.iter().map(|&b| HyperParams::new(big_n, 1, b)).collect(),
            Method::Sb | Method::Sdb => ns.iter().flat_map(|&n| v.r.iter().map(move |&r| HyperParams::new(n, r, 1))).collect(),
            Method::Blb => ns
                .iter()
                .flat_map(|&n| v.r.iter().flat_map(move |&r| v.b.iter().map(move |&b| HyperParams::new(n, r, b))))
                .collect(),
        };
        for p in raw {
            let p = p.normalized(method, big_n)?;
            let cell = GridCell { method, params: (p.n, p.r, p.b) };
            if !cells.contains(&cell) {
                cells.push(cell);
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::Config("verification grid is empty".into()));
    }
    Ok(cells)
}

struct Replicate {
    moments: MomentConstants,
    theta: f64,
    /// SE² per distinct cell, or the error message.
    se2: Vec<std::result::Result<f64, String>>,
}

fn replicate(cfg: &ExperimentConfig, cells: &[GridCell], m: u64) -> Result<Replicate> {
    let seed = cfg.seed();
    let loaded = cfg.load_data(seed, m)?;
    let x = Dataset::univariate(loaded.data.column(0))?;
    let est: Arc<dyn Estimator> = Arc::new(MeanEstimator::all_columns(&x));
    let opts = EngineOptions::default();
    let engine_seed = seed.child("engine", m);
    let se2 = cells
        .iter()
        .map(|c| {
            let out = if c.method == Method::Af {
                est.analytic_variance(&x).expect("mean has a closed form").map(|v| v[0])
            } else {
                let (n, r, b) = c.params;
                run_engine(c.method, &x, &est, HyperParams::new(n, r, b), engine_seed, &opts).map(|v| v.scalar())
            };
            out.map_err(|e| e.to_string())
        })
        .collect();
    Ok(Replicate { moments: central_moments(&x)?, theta: evaluate_full(est.as_ref(), &x)?[0], se2 })
}

/// Runs every grid cell on the same M datasets (one generation per m) and
/// tabulates predicted MSE, Monte-Carlo MSE and their ratio.
pub fn run_mse_verification(cfg: &ExperimentConfig, workers: usize) -> Result<Report> {
    let generator = cfg.generator()?.ok_or_else(|| Error::Config("MSE verification needs a synthetic generator".into()))?;
    if cfg.estimator.name != "mean" {
        return Err(Error::Config(format!("MSE verification uses the mean estimator, not `{}`", cfg.estimator.name)));
    }
    let big_n = cfg.data.n_rows.expect("validated");
    let m = cfg.verify.replicates;
    if m < 2 {
        return Err(Error::Config("MSE verification needs at least 2 replicates".into()));
    }
    let cells = verification_grid(cfg, big_n)?;

    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().map_err(|e| Error::Config(e.to_string()))?;
    let reps: Vec<Replicate> = pool.install(|| (0..m as u64).into_par_iter().map(|k| replicate(cfg, &cells, k)).collect::<Result<_>>())?;

    let (s2, s4) = reps.iter().fold((0.0, 0.0), |a, r| (a.0 + r.moments.sigma_sq(), a.1 + r.moments.sigma4()));
    let mean_moments = MomentConstants::univariate(s2 / m as f64, s4 / m as f64);
    let excess = mean_moments.sigma4() - mean_moments.sigma_sq().powi(2);
    let degenerate = excess <= KURTOSIS_FLOOR * mean_moments.sigma_sq().powi(2).max(f64::MIN_POSITIVE);
    let (truth, truth_label) = match generator.population_moments() {
        Some((_, var)) => (var / big_n as f64, "exact sigma^2/N"),
        None => {
            let thetas: Vec<f64> = reps.iter().map(|r| r.theta).collect();
            (monte_carlo_truth(&thetas, 0.0), "Monte-Carlo around 0")
        }
    };

    let mut report = Report::new(
        "MSE model verification",
        &["method", "n", "R", "B", "predicted_mse", "empirical_mse", "ratio", "status"],
    );
    report
        .meta("seed", cfg.seed)
        .meta("data", format!("{} (N = {big_n}): {}", generator.name(), generator.describe()))
        .meta("replicates", m)
        .meta("truth", format!("{truth_label} = {}", super::report::format_float(truth)))
        .meta("sigma^2", super::report::format_float(mean_moments.sigma_sq()))
        .meta("sigma4", super::report::format_float(mean_moments.sigma4()))
        .meta("rng", crate::sampling::GENERATOR)
        .meta("version", env!("CARGO_PKG_VERSION"));
    report.config = Some(cfg.to_toml());

    let mut failures = BTreeMap::new();
    for (j, cell) in cells.iter().enumerate() {
        let (n, r, b) = cell.params;
        let p = HyperParams::new(n, r, b);
        let estimates: std::result::Result<Vec<f64>, String> = reps.iter().map(|rep| rep.se2[j].clone()).collect();
        let predicted = predict_mse(cell.method, big_n, ModelParams::for_method(cell.method, &p), &mean_moments.c, false).map(|m| m.total);
        let shown = |v: usize| if matches!(cell.method, Method::Af | Method::Tb) && v == big_n { Cell::Empty } else { Cell::from(v) };
        let mut row = vec![
            Cell::text(cell.method.label()),
            shown(n),
            if matches!(cell.method, Method::Af | Method::Tb) { Cell::Empty } else { r.into() },
            if matches!(cell.method, Method::Af | Method::Sb | Method::Sdb) { Cell::Empty } else { b.into() },
        ];
        match estimates.and_then(|est| Ok((est, predicted.map_err(|e| e.to_string())?))) {
            Ok((est, pred)) => {
                let emp = empirical_mse(&est, truth);
                let status = if degenerate { "degenerate-kurtosis" } else { "ok" };
                row.extend([pred.into(), emp.into(), guarded_ratio(pred, emp).into(), status.into()]);
            }
            Err(e) => {
                *failures.entry(cell.method.label()).or_insert(0) += 1;
                row.extend([Cell::Empty, Cell::Empty, Cell::Empty, Cell::text(format!("error: {e}"))]);
            }
        }
        report.push(row);
    }
    for (method, count) in failures {
        report.notes.push(format!("{method}: {count} cells failed"));
    }
    Ok(report)
}
