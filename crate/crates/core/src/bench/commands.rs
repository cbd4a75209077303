//! The five command-line verbs as library functions returning reports.

use std::sync::Arc;

use crate::engines::{run_engine, HyperParams, Method};
use crate::error::{Error, Result};
use crate::msemodel::{predict_mse, ModelParams};
use crate::tuner::{default_blb_n, optimal_general_blb, optimal_general_linear, TunedParams};

use super::calibrate::{calibrate_cost_model, estimator_moments, pilot_reference};
use super::compare::{describe_cost_model, run_budget_comparison};
use super::config::ExperimentConfig;
use super::report::{format_float, Cell, Report};
use super::verify::run_mse_verification;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verb {
    Calibrate,
    Tune,
    VerifyMse,
    Compare,
    Run,
}

impl Verb {
    pub const ALL: [Verb; 5] = [Verb::Calibrate, Verb::Tune, Verb::VerifyMse, Verb::Compare, Verb::Run];

    pub fn name(self) -> &'static str {
        match self {
            Verb::Calibrate => "calibrate",
            Verb::Tune => "tune",
            Verb::VerifyMse => "verify-mse",
            Verb::Compare => "compare",
            Verb::Run => "run",
        }
    }
}

pub fn execute(verb: Verb, cfg: &ExperimentConfig, workers: usize) -> Result<Report> {
    match verb {
        Verb::Calibrate => calibrate_command(cfg),
        Verb::Tune => tune_command(cfg),
        Verb::VerifyMse => run_mse_verification(cfg, workers),
        Verb::Compare => run_budget_comparison(cfg, workers),
        Verb::Run => run_command(cfg, workers),
    }
}

fn base_report(title: &str, columns: &[&str], cfg: &ExperimentConfig, description: &str) -> Report {
    let mut r = Report::new(title, columns);
    r.meta("seed", cfg.seed).meta("data", description).meta("estimator", cfg.estimator.name.clone()).meta("version", env!("CARGO_PKG_VERSION"));
    r.config = Some(cfg.to_toml());
    r
}

/// Fits a cost model on the configured data and writes it when
/// `calibrate.cost_model_out` is set.
pub fn calibrate_command(cfg: &ExperimentConfig) -> Result<Report> {
    let seed = cfg.seed();
    let loaded = cfg.load_data(seed, 0)?;
    let data = &loaded.data;
    let est = cfg.estimator(data)?;
    let opts = cfg.engine_options(data, 1)?;
    let n = cfg.calibrate.n.unwrap_or_else(|| default_blb_n(data.n_rows()));
    let fixed = cfg.calibrate.reference_budget.or(cfg.tune.c_max);
    let reference = |m: &crate::tuner::CostModel| match fixed {
        Some(c) => Ok(c),
        None => pilot_reference(m, n, &cfg.calibrate, seed),
    };
    let cal = calibrate_cost_model(data, &est, &opts, &cfg.calibrate, &reference, seed)?;
    let mut model = cal.model.clone();
    model.c_max = cfg.tune.c_max;
    if let Some(path) = &cfg.calibrate.cost_model_out {
        let text = toml::to_string(&model).expect("cost model serializes");
        std::fs::write(path, text).map_err(|source| Error::Write { path: path.clone(), source })?;
    }

    let mut r = base_report("Cost model calibration", &["coefficient", "value", "detail"], cfg, &loaded.description);
    r.meta("pilot n", n).meta("reference budget", format_float(cal.reference_budget));
    if let Some(b) = &cal.blb {
        let detail = format!("{} pilot points, R^2 = {}", b.points, format_float(b.r_squared));
        r.push(vec!["alpha1".into(), b.alpha1.into(), detail.clone().into()]);
        r.push(vec!["alpha2".into(), b.alpha2.into(), detail.into()]);
    }
    for (name, fit) in [("alpha_sdb", &cal.sdb), ("alpha_sb", &cal.sb)] {
        if let Some(f) = fit {
            let history: Vec<String> = f.history.iter().map(|&a| format_float(a)).collect();
            r.push(vec![name.into(), f.alpha.into(), format!("rounds: {}", history.join(" -> ")).into()]);
        }
    }
    r.push(vec!["pilot_seconds".into(), model.pilot_seconds.into(), Cell::Empty]);
    Ok(r)
}

/// Tuned (n, R, B) for each configured method under the budget.
pub fn tune_command(cfg: &ExperimentConfig) -> Result<Report> {
    let seed = cfg.seed();
    let loaded = cfg.load_data(seed, 0)?;
    let data = &loaded.data;
    let big_n = data.n_rows();
    let est = cfg.estimator(data)?;
    let model = cfg.cost_model()?.ok_or_else(|| Error::Config("tuning needs a cost model: run `calibrate` or give [cost_model]".into()))?;
    let c_max = cfg.tune.c_max.or(model.c_max).ok_or_else(|| Error::Config("tuning needs a budget: set tune.c_max".into()))?;
    let moments = estimator_moments(&est, data)?;

    let mut r = base_report(
        "Tuned hyperparameters",
        &["method", "n", "R", "B", "objective", "predicted_mse", "predicted_time", "budget_slack", "warnings"],
        cfg,
        &loaded.description,
    );
    r.meta("c_max", format_float(c_max)).meta("cost model", describe_cost_model(&model)).meta("literal replicate formula", cfg.tune.paper_literal);
    for &method in &cfg.tune.methods {
        let tuned: Result<TunedParams> = match method {
            Method::Blb => {
                let (a1, a2) = model.blb_alphas()?;
                optimal_general_blb(&moments.tuner_constants()?, a1, a2, c_max, big_n, cfg.tune.n, model.gamma)
            }
            Method::Sb | Method::Sdb => {
                let (c1p, c2p) = moments.sb_constants();
                optimal_general_linear(method, c1p, c2p, model.linear_alpha(method)?, c_max, big_n, model.gamma, cfg.tune.paper_literal)
            }
            other => Err(Error::Config(format!("{other} has no tunable hyperparameters"))),
        };
        match tuned {
            Ok(t) => {
                let p = t.params;
                let mse = predict_mse(method, big_n, ModelParams::for_method(method, &p), &moments.c, cfg.tune.include_cross)?;
                r.push(vec![
                    method.label().into(),
                    p.n.into(),
                    p.r.into(),
                    if method == Method::Blb { p.b.into() } else { Cell::Empty },
                    t.objective.into(),
                    mse.total.into(),
                    t.predicted_time.into(),
                    t.budget_slack.into(),
                    t.warnings.join("; ").into(),
                ]);
            }
            Err(e) => r.push(vec![
                method.label().into(),
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                format!("error: {e}").into(),
            ]),
        }
    }
    Ok(r)
}

/// A single engine invocation; reports the covariance matrix entries.
pub fn run_command(cfg: &ExperimentConfig, workers: usize) -> Result<Report> {
    let run = cfg.run.as_ref().ok_or_else(|| Error::Config("`run` needs a [run] table".into()))?;
    let seed = cfg.seed();
    let loaded = cfg.load_data(seed, 0)?;
    let data = &loaded.data;
    let est: Arc<dyn crate::Estimator> = cfg.estimator(data)?;
    let opts = cfg.engine_options(data, workers)?;
    let n = run.n.unwrap_or_else(|| default_blb_n(data.n_rows()));
    let v = run_engine(run.method, data, &est, HyperParams::new(n, run.r, run.b), seed.child("run", 0), &opts)?;

    let mut r = base_report("Variance estimate", &["row", "col", "value"], cfg, &loaded.description);
    r.meta("method", run.method.label())
        .meta("n", v.params.n)
        .meta("R", v.params.r)
        .meta("B", v.params.b)
        .meta("seconds", format_float(v.seconds))
        .meta("skipped", format!("{} of {}", v.skipped, v.attempted));
    for i in 0..v.dim {
        for j in 0..v.dim {
            r.push(vec![i.into(), j.into(), v.get(i, j).into()]);
        }
    }
    Ok(r)
}
