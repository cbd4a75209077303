//! Closed-form budget-constrained hyperparameters and pilot-run calibration of
//! the time coefficients they depend on.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engines::{HyperParams, Method, Provenance};
use crate::error::{Error, Result};
use crate::moments::TildeConstants;
use crate::sampling::SeedSpec;

/// Relative slack used when flooring closed-form quantities and checking the
/// budget, so that e.g. 0.15 / 0.0015 floors to 100 rather than 99.
const FLOOR_SLACK: f64 = 1e-9;

fn tfloor(x: f64) -> usize {
    if !x.is_finite() || x <= 0.0 {
        return 0;
    }
    (x * (1.0 + FLOOR_SLACK)).floor() as usize
}

/// ⌊N^e⌋, clamped to 1..=N.
pub fn subsample_size(big_n: usize, exponent: f64) -> usize {
    tfloor((big_n as f64).powf(exponent)).clamp(1, big_n.max(1))
}

/// Default BLB subsample size ⌊N^0.7⌋.
pub fn default_blb_n(big_n: usize) -> usize {
    subsample_size(big_n, 0.7)
}

/// Machine-specific time coefficients and the budget they are used against.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    /// BLB seconds per unit of n^γ·R·B.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha1: Option<f64>,
    /// BLB seconds per unit of n·R.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_sb: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_sdb: Option<f64>,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_max: Option<f64>,
    /// Coefficient of determination of the BLB fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_quality: Option<f64>,
    /// Wall-clock seconds spent on pilot runs.
    #[serde(default)]
    pub pilot_seconds: f64,
}

fn one() -> f64 {
    1.0
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => Err(Error::Config(format!("{name} must be positive, got {x}"))),
            _ => Ok(()),
        };
        positive("alpha1", self.alpha1)?;
        positive("alpha2", self.alpha2)?;
        positive("alpha_sb", self.alpha_sb)?;
        positive("alpha_sdb", self.alpha_sdb)?;
        positive("c_max", self.c_max)?;
        if !(self.gamma >= 1.0) {
            return Err(Error::Config(format!("gamma must be at least 1, got {}", self.gamma)));
        }
        if let Some(q) = self.fit_quality {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::Config(format!("fit_quality must lie in [0, 1], got {q}")));
            }
        }
        Ok(())
    }

    /// α for a single-coefficient method.
    pub fn linear_alpha(&self, method: Method) -> Result<f64> {
        let (name, v) = match method {
            Method::Sb => ("alpha_sb", self.alpha_sb),
            Method::Sdb => ("alpha_sdb", self.alpha_sdb),
            other => return Err(Error::Contract(format!("{other} has no single time coefficient"))),
        };
        v.ok_or_else(|| Error::Config(format!("cost model lacks {name}")))
    }

    pub fn blb_alphas(&self) -> Result<(f64, f64)> {
        match (self.alpha1, self.alpha2) {
            (Some(a1), Some(a2)) => Ok((a1, a2)),
            _ => Err(Error::Config("cost model lacks alpha1/alpha2".into())),
        }
    }

    /// Predicted seconds for `method` at `p`.
    pub fn predict_time(&self, method: Method, p: &HyperParams) -> Result<f64> {
        let ng = (p.n as f64).powf(self.gamma);
        match method {
            Method::Blb => {
                let (a1, a2) = self.blb_alphas()?;
                Ok(a1 * ng * (p.r * p.b) as f64 + a2 * (p.n * p.r) as f64)
            }
            Method::Sb | Method::Sdb => Ok(self.linear_alpha(method)? * ng * p.r as f64),
            other => Err(Error::Contract(format!("no cost model for {other}"))),
        }
    }
}

/// A tuned (n, R, B) with its objective value and budget use.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TunedParams {
    pub method: Method,
    pub params: HyperParams,
    /// Value of the method's tuner objective, i.e. the MSE with the N-only
    /// term dropped and the common N² factor removed.
    pub objective: f64,
    pub predicted_time: f64,
    pub budget_slack: f64,
    pub warnings: Vec<String>,
}

/// c̃1/(RB) + c̃2/(nR) + c̃3/n².
pub fn blb_objective(t: &TildeConstants, n: f64, r: f64, b: f64) -> f64 {
    t.c1 / (r * b) + t.c2 / (n * r) + t.c3 / (n * n)
}

/// c1'/R + c2'/n².
pub fn sb_objective(c1p: f64, c2p: f64, n: f64, r: f64) -> f64 {
    c1p / r + c2p / (n * n)
}

fn check_budget(time: f64, c_max: f64) {
    assert!(time <= c_max * (1.0 + FLOOR_SLACK), "tuned time {time} exceeds budget {c_max}");
}

fn regime_warnings(n: usize, r: usize, b: Option<usize>) -> Vec<String> {
    let root = (n as f64).sqrt();
    let mut w = Vec::new();
    if (r as f64) < root {
        w.push(format!("R = {r} is below sqrt(n) = {root:.1}; the MSE model may be inaccurate"));
    }
    if let Some(b) = b.filter(|&b| (b as f64) < root) {
        w.push(format!("B = {b} is below sqrt(n) = {root:.1}; the MSE model may be inaccurate"));
    }
    for m in &w {
        log::warn!("{m}");
    }
    w
}

/// SB/SDB optimum for cost α·n·R ≤ C_max.
pub fn optimal_sb_sdb(method: Method, c1p: f64, c2p: f64, alpha: f64, c_max: f64, big_n: usize, paper_literal: bool) -> Result<TunedParams> {
    optimal_general_linear(method, c1p, c2p, alpha, c_max, big_n, 1.0, paper_literal)
}

/// SB/SDB optimum for cost α·n^γ·R ≤ C_max.
///
/// Stationarity gives n^(γ+2) = 2c2'K/(γc1') with K = C_max/α, and R = K/n^γ
/// saturates the budget. `paper_literal` keeps the γ = 1 subsample size and the
/// printed R = (c2'/2c1')^(1/3) K^(2/3), which leaves part of the budget unused.
#[allow(clippy::too_many_arguments)]
pub fn optimal_general_linear(
    method: Method,
    c1p: f64,
    c2p: f64,
    alpha: f64,
    c_max: f64,
    big_n: usize,
    gamma: f64,
    paper_literal: bool,
) -> Result<TunedParams> {
    if !matches!(method, Method::Sb | Method::Sdb) {
        return Err(Error::Contract(format!("{method} is not tuned by the single-coefficient rule")));
    }
    if !(c1p > 0.0 && c2p > 0.0 && alpha > 0.0 && c_max > 0.0 && gamma >= 1.0) || big_n == 0 {
        return Err(Error::Contract("tuner inputs must be positive with gamma >= 1".into()));
    }
    let k = c_max / alpha;
    if tfloor(k) < 1 {
        return Err(Error::InfeasibleBudget { c_max, minimal: alpha });
    }
    let n_raw = if paper_literal {
        tfloor((2.0 * c2p / c1p * k).cbrt())
    } else {
        tfloor((2.0 * c2p * k / (gamma * c1p)).powf(1.0 / (gamma + 2.0)))
    };
    // n^γ must fit the budget on its own for R ≥ 1.
    let n_budget = tfloor(k.powf(1.0 / gamma));
    let n = n_raw.clamp(1, big_n.min(n_budget).max(1));
    let ng = (n as f64).powf(gamma);
    let r = if paper_literal {
        tfloor((c2p / (2.0 * c1p)).cbrt() * k.powf(2.0 / 3.0)).min(tfloor(k / ng))
    } else {
        tfloor(k / ng)
    };
    if r < 1 {
        return Err(Error::InfeasibleBudget { c_max, minimal: alpha * ng });
    }
    let time = alpha * ng * r as f64;
    check_budget(time, c_max);
    Ok(TunedParams {
        method,
        params: HyperParams::new(n, r, 1).with_provenance(Provenance::Tuned),
        objective: sb_objective(c1p, c2p, n as f64, r as f64),
        predicted_time: time,
        budget_slack: c_max - time,
        warnings: regime_warnings(n, r, None),
    })
}

/// BLB optimum for cost α1·n·R·B + α2·n·R ≤ C_max at n = override or ⌊N^0.7⌋.
pub fn optimal_blb(t: &TildeConstants, alpha1: f64, alpha2: f64, c_max: f64, big_n: usize, n_override: Option<usize>) -> Result<TunedParams> {
    optimal_general_blb(t, alpha1, alpha2, c_max, big_n, n_override, 1.0)
}

/// BLB optimum for cost α1·n^γ·R·B + α2·n·R ≤ C_max.
pub fn optimal_general_blb(
    t: &TildeConstants,
    alpha1: f64,
    alpha2: f64,
    c_max: f64,
    big_n: usize,
    n_override: Option<usize>,
    gamma: f64,
) -> Result<TunedParams> {
    if !(t.c1 > 0.0 && t.c2 > 0.0 && t.c3 >= 0.0 && alpha1 > 0.0 && alpha2 >= 0.0 && c_max > 0.0 && gamma >= 1.0) {
        return Err(Error::Contract("tuner inputs must be positive with gamma >= 1".into()));
    }
    let n = match n_override {
        Some(0) => return Err(Error::Contract("subsample size override must be at least 1".into())),
        Some(n) => n.min(big_n),
        None => default_blb_n(big_n),
    };
    let nf = n as f64;
    let ng = nf.powf(gamma);
    let b = tfloor((t.c1 * alpha2 / (t.c2 * alpha1)).sqrt() * nf.powf(1.0 - gamma / 2.0)).max(1);
    let per_replicate = alpha1 * ng * b as f64 + alpha2 * nf;
    let r = tfloor(c_max / per_replicate);
    if r < 1 {
        return Err(Error::InfeasibleBudget { c_max, minimal: per_replicate });
    }
    let time = per_replicate * r as f64;
    check_budget(time, c_max);
    Ok(TunedParams {
        method: Method::Blb,
        params: HyperParams::new(n, r, b).with_provenance(Provenance::Tuned),
        objective: blb_objective(t, nf, r as f64, b as f64),
        predicted_time: time,
        budget_slack: c_max - time,
        warnings: regime_warnings(n, r, Some(b)),
    })
}

/// Fitted BLB time coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlbCalibration {
    pub alpha1: f64,
    pub alpha2: f64,
    pub r_squared: f64,
    pub pilot_seconds: f64,
    pub points: usize,
}

/// Pilot (n, R, B) grid: R from ⌊U(1, 10)⌋ and B from ⌊U(1, 80)⌋.
pub fn pilot_grid(n: usize, count: usize, seed: SeedSpec) -> Vec<(usize, usize, usize)> {
    let mut s = seed.child("pilot-grid", 0).stream(0, 0);
    (0..count)
        .map(|_| {
            let r = s.random_range(1.0..10.0f64).floor() as usize;
            let b = s.random_range(1.0..80.0f64).floor() as usize;
            (n, r, b)
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn timed_median<F: FnMut() -> Result<f64>>(repeats: usize, mut f: F, spent: &mut f64) -> Result<f64> {
    let mut runs = Vec::with_capacity(repeats.max(1));
    for _ in 0..repeats.max(1) {
        let t = f()?;
        *spent += t;
        runs.push(t);
    }
    Ok(median(runs))
}

/// Least squares time ≈ α1·(n^γ R B) + α2·(n R) through the origin, using the
/// median of `repeats` timings per pilot point.
pub fn calibrate_blb<F>(points: &[(usize, usize, usize)], gamma: f64, repeats: usize, mut time: F) -> Result<BlbCalibration>
where
    F: FnMut(usize, usize, usize) -> Result<f64>,
{
    let mut distinct: Vec<(usize, usize, usize)> = points.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::CalibrationFailed(format!("need at least 3 distinct pilot points, got {}", distinct.len())));
    }
    let mut spent = 0.0;
    let mut rows = Vec::with_capacity(points.len());
    for &(n, r, b) in points {
        let t = timed_median(repeats, || time(n, r, b), &mut spent)?;
        let x1 = (n as f64).powf(gamma) * (r * b) as f64;
        let x2 = (n * r) as f64;
        rows.push((x1, x2, t));
    }
    let (mut s11, mut s12, mut s22, mut s1y, mut s2y) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x1, x2, y) in &rows {
        s11 += x1 * x1;
        s12 += x1 * x2;
        s22 += x2 * x2;
        s1y += x1 * y;
        s2y += x2 * y;
    }
    let det = s11 * s22 - s12 * s12;
    if !(det > 1e-12 * s11 * s22) {
        return Err(Error::CalibrationFailed("pilot design does not separate the n·R·B and n·R covariates".into()));
    }
    let alpha1 = (s22 * s1y - s12 * s2y) / det;
    let alpha2 = (s11 * s2y - s12 * s1y) / det;
    let mean_y = rows.iter().map(|r| r.2).sum::<f64>() / rows.len() as f64;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for &(x1, x2, y) in &rows {
        ss_res += (y - alpha1 * x1 - alpha2 * x2).powi(2);
        ss_tot += (y - mean_y).powi(2);
    }
    let r_squared = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else if ss_res == 0.0 { 1.0 } else { 0.0 };
    if !(alpha1 > 0.0 && alpha2 > 0.0) {
        return Err(Error::CalibrationFailed(format!(
            "non-positive coefficient: alpha1 = {alpha1:.3e}, alpha2 = {alpha2:.3e}, R^2 = {r_squared:.3}, {} points",
            rows.len()
        )));
    }
    Ok(BlbCalibration { alpha1, alpha2, r_squared, pilot_seconds: spent, points: rows.len() })
}

/// Fitted single time coefficient with the rounds that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearCalibration {
    pub alpha: f64,
    /// α after each round, starting with the initial pilot.
    pub history: Vec<f64>,
    pub pilot_seconds: f64,
}

/// Number of refinement rounds after the initial pilot.
pub const REFINE_ROUNDS: usize = 3;

/// Relative change in α below which refinement stops.
pub const REFINE_TOLERANCE: f64 = 0.05;

fn slope_through_origin(rows: &[(f64, f64)]) -> Result<f64> {
    let sxx: f64 = rows.iter().map(|r| r.0 * r.0).sum();
    let sxy: f64 = rows.iter().map(|r| r.0 * r.1).sum();
    let alpha = sxy / sxx;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::CalibrationFailed(format!("non-positive slope {alpha:.3e} from {} points", rows.len())));
    }
    Ok(alpha)
}

/// Slope of time ≈ α·n^γ·R through the origin, refined progressively.
///
/// After the initial fit, each round asks `candidate` for the subsample size
/// the current α would select, re-pilots at ⌊0.8n*⌋, n*, ⌈1.25n*⌉ with
/// `pilot_r` replicates, and refits on that round alone. Refinement stops once
/// α moves by less than 5% or after three rounds.
pub fn calibrate_linear<F, C>(
    points: &[(usize, usize)],
    gamma: f64,
    repeats: usize,
    pilot_r: usize,
    mut time: F,
    candidate: C,
) -> Result<LinearCalibration>
where
    F: FnMut(usize, usize) -> Result<f64>,
    C: Fn(f64) -> Result<usize>,
{
    if points.len() < 2 {
        return Err(Error::CalibrationFailed(format!("need at least 2 pilot points, got {}", points.len())));
    }
    let mut spent = 0.0;
    let mut fit = |pts: &[(usize, usize)], spent: &mut f64| -> Result<f64> {
        let mut rows = Vec::with_capacity(pts.len());
        for &(n, r) in pts {
            let t = timed_median(repeats, || time(n, r), spent)?;
            rows.push(((n as f64).powf(gamma) * r as f64, t));
        }
        slope_through_origin(&rows)
    };
    let mut alpha = fit(points, &mut spent)?;
    let mut history = vec![alpha];
    for _ in 0..REFINE_ROUNDS {
        let n_star = candidate(alpha)?.max(1);
        let mut ns = vec![((0.8 * n_star as f64).floor() as usize).max(1), n_star, (1.25 * n_star as f64).ceil() as usize];
        ns.dedup();
        let pts: Vec<(usize, usize)> = ns.into_iter().map(|n| (n, pilot_r.max(1))).collect();
        let next = fit(&pts, &mut spent)?;
        history.push(next);
        let change = (next - alpha).abs() / alpha;
        alpha = next;
        if change < REFINE_TOLERANCE {
            break;
        }
    }
    Ok(LinearCalibration { alpha, history, pilot_seconds: spent })
}
