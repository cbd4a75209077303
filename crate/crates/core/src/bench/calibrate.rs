//! Pilot-run calibration of a [`CostModel`] against real engine runs.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::engines::{run_engine, EngineOptions, HyperParams, Method};
use crate::error::{Error, Result};
use crate::estimators::{Dataset, Estimator};
use crate::moments::{central_moments, MomentConstants};
use crate::sampling::SeedSpec;
use crate::tuner::{calibrate_blb, calibrate_linear, default_blb_n, optimal_general_linear, pilot_grid, BlbCalibration, CostModel, LinearCalibration};

use super::config::CalibrateConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub model: CostModel,
    pub blb: Option<BlbCalibration>,
    pub sdb: Option<LinearCalibration>,
    pub sb: Option<LinearCalibration>,
    /// Budget the SB/SDB refinement rounds were steered by.
    pub reference_budget: f64,
}

/// Moment constants of `est`'s per-row representation on `data`.
pub fn estimator_moments(est: &Arc<dyn Estimator>, data: &Dataset) -> Result<MomentConstants> {
    central_moments(&est.moment_representation(data)?)
}

fn timed(method: Method, data: &Dataset, est: &Arc<dyn Estimator>, p: HyperParams, seed: SeedSpec, opts: &EngineOptions) -> Result<f64> {
    Ok(run_engine(method, data, est, p, seed, opts)?.seconds)
}

/// Fits α1, α2 from a BLB pilot grid and α_SB, α_SDB progressively.
///
/// Pilot runs are executed one at a time with a single worker. The SB/SDB
/// rounds are steered by the budget `reference` computes from the partially
/// fitted model.
pub fn calibrate_cost_model(
    data: &Dataset,
    est: &Arc<dyn Estimator>,
    opts: &EngineOptions,
    cfg: &CalibrateConfig,
    reference: &dyn Fn(&CostModel) -> Result<f64>,
    seed: SeedSpec,
) -> Result<Calibration> {
    let big_n = data.n_rows();
    let opts = EngineOptions { workers: 1, keep_terms: false, ..opts.clone() };
    let gamma = est.cost_exponent();
    let n0 = cfg.n.unwrap_or_else(|| default_blb_n(big_n)).min(big_n);
    let mut model = CostModel { gamma, ..CostModel::default() };

    let mut blb = None;
    let wants = |m: Method| cfg.methods.contains(&m);
    if wants(Method::Blb) {
        let grid = pilot_grid(n0, cfg.grid_points, seed);
        let mut k = 0u64;
        let fit = calibrate_blb(&grid, gamma, cfg.repeats, |n, r, b| {
            k += 1;
            timed(Method::Blb, data, est, HyperParams::new(n, r, b), seed.child("pilot-blb", k), &opts)
        })?;
        log::info!("alpha1 = {:.4e}, alpha2 = {:.4e}, R^2 = {:.4}", fit.alpha1, fit.alpha2, fit.r_squared);
        model.alpha1 = Some(fit.alpha1);
        model.alpha2 = Some(fit.alpha2);
        model.fit_quality = Some(fit.r_squared);
        model.pilot_seconds += fit.pilot_seconds;
        blb = Some(fit);
    }

    let reference = reference(&model)?;
    if !(reference > 0.0 && reference.is_finite()) {
        return Err(Error::Config(format!("reference budget must be positive, got {reference}")));
    }

    let linear = |method: Method| -> Result<LinearCalibration> {
        let moments = estimator_moments(est, data)?;
        let (c1p, c2p) = moments.sb_constants();
        let initial: Vec<(usize, usize)> = [16, 8, 4].iter().map(|d| ((n0 / d).max(2).min(big_n), cfg.pilot_r.max(1))).collect();
        let mut k = 0u64;
        let fit = calibrate_linear(
            &initial,
            gamma,
            cfg.repeats,
            cfg.pilot_r,
            |n, r| {
                k += 1;
                timed(method, data, est, HyperParams::new(n, r, 1), seed.child(&format!("pilot-{}", method.label()), k), &opts)
            },
            |alpha| Ok(optimal_general_linear(method, c1p, c2p, alpha, reference, big_n, gamma, false)?.params.n),
        )?;
        log::info!("alpha_{} = {:.4e} after {} rounds", method.label(), fit.alpha, fit.history.len());
        Ok(fit)
    };
    let sdb = wants(Method::Sdb).then(|| linear(Method::Sdb)).transpose()?;
    let sb = wants(Method::Sb).then(|| linear(Method::Sb)).transpose()?;
    if let Some(f) = &sdb {
        model.alpha_sdb = Some(f.alpha);
        model.pilot_seconds += f.pilot_seconds;
    }
    if let Some(f) = &sb {
        model.alpha_sb = Some(f.alpha);
        model.pilot_seconds += f.pilot_seconds;
    }
    model.validate()?;
    Ok(Calibration { model, blb, sdb, sb, reference_budget: reference })
}

/// Largest predicted BLB time over the pilot grid; the fallback reference
/// budget when none is configured.
pub fn pilot_reference(model: &CostModel, n: usize, cfg: &CalibrateConfig, seed: SeedSpec) -> Result<f64> {
    let times: Vec<f64> = pilot_grid(n, cfg.grid_points, seed)
        .iter()
        .map(|&(n, r, b)| model.predict_time(Method::Blb, &HyperParams::new(n, r, b)))
        .collect::<Result<_>>()?;
    Ok(times.into_iter().fold(0.0, f64::max))
}
