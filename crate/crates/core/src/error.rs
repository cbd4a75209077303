use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("population size must be at least 1")]
    InvalidPopulation,
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("insufficient data: need at least {needed} rows, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("degenerate view: total weight is zero")]
    DegenerateView,
    #[error("rank-deficient system in {0}")]
    RankDeficient(&'static str),
    #[error("degenerate correlation: an indicated variance is zero")]
    DegenerateCorrelation,
    #[error("degenerate instrument: weighted cross-moment of instrument and covariate is zero")]
    DegenerateInstrument,
    #[error("transform undefined at the evaluated point")]
    Domain,

    #[error("degenerate kurtosis: sigma4 - sigma^4 is below the numerical floor")]
    DegenerateKurtosis,

    #[error("too many degenerate replicates: {skipped} of {attempted} skipped (limit 1%)")]
    DataQuality { skipped: usize, attempted: usize },

    #[error("contract violation: {0}")]
    Contract(String),
    #[error("infeasible budget: C_max = {c_max:.6e}s is below the minimal feasible budget {minimal:.6e}s")]
    InfeasibleBudget { c_max: f64, minimal: f64 },
    #[error("calibration failed: {0}")]
    CalibrationFailed(String),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("refusing to emit an empty report")]
    EmptyResults,
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Errors that invalidate a single bootstrap replicate but not the run.
    pub fn is_replicate_degeneracy(&self) -> bool {
        matches!(
            self,
            Error::DegenerateView
                | Error::RankDeficient(_)
                | Error::DegenerateCorrelation
                | Error::DegenerateInstrument
                | Error::Domain
        )
    }
}
