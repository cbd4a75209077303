//! Leading-order MSE of each variance estimator, and a Monte-Carlo check of it.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::engines::{run_engine, EngineOptions, HyperParams, Method};
use crate::error::{Error, Result};
use crate::estimators::{Dataset, Estimator, MeanEstimator};
use crate::moments::{central_moments, CConstants};
use crate::sampling::SeedSpec;

/// Denominators below this are treated as zero by [`guarded_ratio`].
pub const RATIO_FLOOR: f64 = 1e-300;

/// Per-term contributions, named by their order in (N, n, R, B).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MseTerms {
    /// c2 / N³, shared by every method.
    pub full: f64,
    /// c1 / (N² R B) for BLB, c1 / (N² B) for TB.
    pub resample: f64,
    /// c2 / (N² n R), BLB only.
    pub subsample_replicate: f64,
    /// c3 / (N² n²).
    pub subsample_size: f64,
    /// c1 / (N² R), SB and SDB.
    pub replicate: f64,
    /// 3 c4 / (N² n R), SDB only; counted in the total only when requested.
    pub cross: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsePrediction {
    pub method: Method,
    pub total: f64,
    pub terms: MseTerms,
    pub cross_included: bool,
}

/// Hyperparameters passed to the model; each method accepts only the ones it uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ModelParams {
    pub n: Option<usize>,
    pub r: Option<usize>,
    pub b: Option<usize>,
}

impl ModelParams {
    /// The subset of `p` that `method` consumes.
    pub fn for_method(method: Method, p: &HyperParams) -> Self {
        match method {
            Method::Af => Self::default(),
            Method::Tb => Self { b: Some(p.b), ..Self::default() },
            Method::Sb | Method::Sdb => Self { n: Some(p.n), r: Some(p.r), b: None },
            Method::Blb => Self { n: Some(p.n), r: Some(p.r), b: Some(p.b) },
        }
    }
}

fn required(method: Method, what: &str, v: Option<usize>) -> Result<f64> {
    match v {
        Some(x) if x >= 1 => Ok(x as f64),
        Some(_) => Err(Error::Contract(format!("{method}: {what} must be at least 1"))),
        None => Err(Error::Contract(format!("{method}: {what} is required"))),
    }
}

fn forbidden(method: Method, what: &str, v: Option<usize>) -> Result<()> {
    match v {
        Some(_) => Err(Error::Contract(format!("{method} does not take {what}"))),
        None => Ok(()),
    }
}

/// Leading-order MSE of `method`'s SE² estimator on N rows.
pub fn predict_mse(method: Method, big_n: usize, params: ModelParams, c: &CConstants, include_cross: bool) -> Result<MsePrediction> {
    if big_n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: big_n });
    }
    if let Some(n) = params.n {
        if n > big_n {
            return Err(Error::Contract(format!("subsample size {n} exceeds N = {big_n}")));
        }
    }
    let nn = big_n as f64;
    let n2 = nn * nn;
    let mut t = MseTerms { full: c.c2 / (n2 * nn), ..Default::default() };
    match method {
        Method::Af => {
            forbidden(method, "n", params.n)?;
            forbidden(method, "R", params.r)?;
            forbidden(method, "B", params.b)?;
        }
        Method::Tb => {
            forbidden(method, "n", params.n)?;
            forbidden(method, "R", params.r)?;
            let b = required(method, "B", params.b)?;
            t.resample = c.c1 / (n2 * b);
        }
        Method::Blb => {
            let n = required(method, "n", params.n)?;
            let r = required(method, "R", params.r)?;
            let b = required(method, "B", params.b)?;
            t.resample = c.c1 / (n2 * r * b);
            t.subsample_replicate = c.c2 / (n2 * n * r);
            t.subsample_size = c.c3 / (n2 * n * n);
        }
        Method::Sb | Method::Sdb => {
            let n = required(method, "n", params.n)?;
            let r = required(method, "R", params.r)?;
            forbidden(method, "B", params.b)?;
            t.replicate = c.c1 / (n2 * r);
            t.subsample_size = c.c3 / (n2 * n * n);
            if method == Method::Sdb {
                t.cross = 3.0 * c.c4 / (n2 * n * r);
            }
        }
    }
    let cross_included = include_cross && method == Method::Sdb;
    let mut total = t.full + t.resample + t.subsample_replicate + t.subsample_size + t.replicate;
    if cross_included {
        total += t.cross;
    }
    Ok(MsePrediction { method, total, terms: t, cross_included })
}

/// `num / den`, with 1 when both vanish and +∞ when only the denominator does.
pub fn guarded_ratio(num: f64, den: f64) -> f64 {
    if den.abs() < RATIO_FLOOR {
        if num.abs() < RATIO_FLOOR {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

/// M⁻¹ Σ (SE²_m − truth)².
pub fn empirical_mse(estimates: &[f64], truth: f64) -> f64 {
    estimates.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / estimates.len() as f64
}

/// Monte-Carlo reference SE*² = M⁻¹ Σ (θ̂_m − θ)², θ the population value.
pub fn monte_carlo_truth(estimates: &[f64], population: f64) -> f64 {
    empirical_mse(estimates, population)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleOutcome {
    pub predicted: f64,
    pub empirical: f64,
    pub ratio: f64,
    pub replicates: usize,
}

/// Reference value of Var(θ̂) for the oracle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SeTruth {
    /// Known exactly, e.g. σ²/N for a generator with known variance.
    Exact(f64),
    /// Estimated from the M full-sample estimates around a known population mean.
    MonteCarlo { population_mean: f64 },
}

/// Monte-Carlo MSE of `method` over `m` datasets drawn by `generate`, with the
/// model prediction evaluated at moment constants averaged over the datasets.
/// The statistic is the mean of the first column.
pub fn mc_mse_oracle<G>(
    method: Method,
    params: HyperParams,
    m: usize,
    seed: SeedSpec,
    generate: G,
    truth: SeTruth,
    opts: &EngineOptions,
) -> Result<OracleOutcome>
where
    G: Fn(SeedSpec) -> Result<Dataset>,
{
    if m < 2 {
        return Err(Error::Contract("the Monte-Carlo oracle needs at least 2 replicates".into()));
    }
    let mut estimates = Vec::with_capacity(m);
    let mut thetas = Vec::with_capacity(m);
    let (mut s2, mut s4) = (0.0, 0.0);
    let mut big_n = 0;
    for k in 0..m {
        let data = generate(seed.child("dataset", k as u64))?;
        let x = Dataset::univariate(data.column(0))?;
        big_n = x.n_rows();
        let est: Arc<dyn Estimator> = Arc::new(MeanEstimator::all_columns(&x));
        let mom = central_moments(&x)?;
        s2 += mom.sigma_sq();
        s4 += mom.sigma4();
        thetas.push(crate::estimators::evaluate_full(est.as_ref(), &x)?[0]);
        let se2 = if method == Method::Af {
            est.analytic_variance(&x).expect("mean has a closed form")?[0]
        } else {
            run_engine(method, &x, &est, params, seed.child("engine", k as u64), opts)?.scalar()
        };
        estimates.push(se2);
    }
    let constants = crate::moments::MomentConstants::univariate(s2 / m as f64, s4 / m as f64).c;
    let reference = match truth {
        SeTruth::Exact(v) => v,
        SeTruth::MonteCarlo { population_mean } => monte_carlo_truth(&thetas, population_mean),
    };
    let normalized = params.normalized(method, big_n)?;
    let predicted = predict_mse(method, big_n, ModelParams::for_method(method, &normalized), &constants, false)?.total;
    let empirical = empirical_mse(&estimates, reference);
    Ok(OracleOutcome { predicted, empirical, ratio: guarded_ratio(predicted, empirical), replicates: m })
}
