//! Synthetic datasets with known population properties.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::Dataset;
use crate::sampling::SeedSpec;

/// Coefficients of the linear-regression generator.
pub const LINEAR_BETA: [f64; 2] = [0.1, 0.1];
/// Coefficients of the logistic-regression generator.
pub const LOGISTIC_BETA: [f64; 2] = [0.5, 0.5];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    /// Independent standard normal columns.
    Normal,
    /// Independent Exp(1) − 1 columns.
    CenteredExponential,
    /// y = 0.1·x0 + 0.1·x1 + ε with x ~ N(0, I₂), ε ~ N(0, 1).
    Linear,
    /// y ~ Bernoulli(logistic(0.5·x0 + 0.5·x1)) with x ~ N(0, I₂).
    Logistic,
    /// Alternating −1, +1: zero excess kurtosis for even N.
    BalancedTwoPoint,
    /// Every entry equal to 1.
    Constant,
}

impl Generator {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "normal" => Ok(Self::Normal),
            "centered-exponential" | "exponential" => Ok(Self::CenteredExponential),
            "linear" => Ok(Self::Linear),
            "logistic" => Ok(Self::Logistic),
            "balanced-two-point" => Ok(Self::BalancedTwoPoint),
            "constant" => Ok(Self::Constant),
            other => Err(Error::Unknown { kind: "generator", name: other.into() }),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Normal => "normal",
            Self::CenteredExponential => "centered-exponential",
            Self::Linear => "linear",
            Self::Logistic => "logistic",
            Self::BalancedTwoPoint => "balanced-two-point",
            Self::Constant => "constant",
        }
    }

    /// Population mean and variance of each column of the univariate generators.
    pub fn population_moments(self) -> Option<(f64, f64)> {
        match self {
            Self::Normal | Self::CenteredExponential | Self::BalancedTwoPoint => Some((0.0, 1.0)),
            Self::Constant => Some((1.0, 0.0)),
            Self::Linear | Self::Logistic => None,
        }
    }

    pub fn is_regression(self) -> bool {
        matches!(self, Self::Linear | Self::Logistic)
    }

    /// A one-line description recorded in reports.
    pub fn describe(self) -> &'static str {
        match self {
            Self::Normal => "iid N(0,1) columns",
            Self::CenteredExponential => "iid Exp(1)-1 columns",
            Self::Linear => "x ~ N(0, I2), y = 0.1 x0 + 0.1 x1 + N(0,1)",
            Self::Logistic => "x ~ N(0, I2), y ~ Bernoulli(logistic(0.5 x0 + 0.5 x1))",
            Self::BalancedTwoPoint => "alternating -1, +1",
            Self::Constant => "all ones",
        }
    }
}

fn column_names(dim: usize) -> Vec<String> {
    if dim == 1 {
        vec!["x".into()]
    } else {
        (0..dim).map(|j| format!("x{j}")).collect()
    }
}

/// Draws N rows from `generator`. `dim` is the number of columns for the
/// univariate families and is ignored by the regression ones.
pub fn generate_data(generator: Generator, big_n: usize, dim: usize, seed: SeedSpec) -> Result<Dataset> {
    if big_n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: big_n });
    }
    if dim == 0 {
        return Err(Error::Config("generator dimension must be at least 1".into()));
    }
    let mut s = seed.stream(0, 0);
    let (columns, values): (Vec<String>, Vec<f64>) = match generator {
        Generator::Normal => (column_names(dim), (0..big_n * dim).map(|_| -> f64 { StandardNormal.sample(&mut s) }).collect()),
        Generator::CenteredExponential => (
            column_names(dim),
            (0..big_n * dim).map(|_| -> f64 { Exp1.sample(&mut s) }).map(|v| v - 1.0).collect(),
        ),
        Generator::BalancedTwoPoint => (column_names(dim), (0..big_n * dim).map(|i| if (i / dim) % 2 == 0 { -1.0 } else { 1.0 }).collect()),
        Generator::Constant => (column_names(dim), vec![1.0; big_n * dim]),
        Generator::Linear | Generator::Logistic => {
            let mut v = Vec::with_capacity(big_n * 3);
            for _ in 0..big_n {
                let x0: f64 = StandardNormal.sample(&mut s);
                let x1: f64 = StandardNormal.sample(&mut s);
                let y = if generator == Generator::Linear {
                    let e: f64 = StandardNormal.sample(&mut s);
                    LINEAR_BETA[0] * x0 + LINEAR_BETA[1] * x1 + e
                } else {
                    let eta = LOGISTIC_BETA[0] * x0 + LOGISTIC_BETA[1] * x1;
                    let p = 1.0 / (1.0 + (-eta).exp());
                    if s.random::<f64>() < p { 1.0 } else { 0.0 }
                };
                v.extend_from_slice(&[x0, x1, y]);
            }
            (vec!["x0".into(), "x1".into(), "y".into()], v)
        }
    };
    Dataset::new(columns, values)
}
