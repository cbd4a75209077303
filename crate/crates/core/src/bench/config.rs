//! Experiment configuration, read from a single TOML file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bench::generate::{generate_data, Generator};
use crate::bench::ingest::{ingest_csv, IngestSpec};
use crate::engines::{EngineOptions, Method, RowSource, SpillFile, Timing};
use crate::error::{Error, Result};
use crate::estimators::{resolve_estimator, smooth_transform, ColumnRoles, Dataset, Estimator, TransformKind};
use crate::sampling::SeedSpec;
use crate::tuner::CostModel;

fn default_seed() -> u64 {
    20_240_101
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub data: DataConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_model: Option<CostModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_model_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunConfig>,
    #[serde(default)]
    pub tune: TuneConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub compare: CompareConfig,
    #[serde(default)]
    pub calibrate: CalibrateConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Synthetic generator name; exclusive with `path`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    /// CSV file with a header row; exclusive with `generator`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_rows: Option<usize>,
    #[serde(default = "one")]
    pub dim: usize,
    /// Columns kept from a CSV file, in order (default: all).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<String>>,
    /// Columns given the signed-log transform sign(x)·ln|x|.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub signed_log: Vec<String>,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default = "default_estimator")]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<TransformKind>,
    #[serde(default)]
    pub roles: ColumnRoles,
}

fn default_estimator() -> String {
    "mean".into()
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { name: default_estimator(), transform: None, roles: ColumnRoles::default() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    #[default]
    Memory,
    Disk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    #[serde(default)]
    pub source: SourceKind,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub timing: Timing,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self { source: SourceKind::Memory, workers: 1, timing: Timing::Wall }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    /// Subsample size; ⌊N^0.7⌋ when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default = "one")]
    pub r: usize,
    #[serde(default = "one")]
    pub b: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneConfig {
    #[serde(default = "tuned_methods")]
    pub methods: Vec<Method>,
    /// Budget in seconds; falls back to the cost model's `c_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_max: Option<f64>,
    /// BLB subsample size override.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default)]
    pub paper_literal: bool,
    /// Count the SDB cross term in predicted MSE.
    #[serde(default)]
    pub include_cross: bool,
}

fn tuned_methods() -> Vec<Method> {
    vec![Method::Blb, Method::Sdb, Method::Sb]
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self { methods: tuned_methods(), c_max: None, n: None, paper_literal: false, include_cross: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "verify_methods")]
    pub methods: Vec<Method>,
    /// Number of independent datasets M.
    #[serde(default = "default_m")]
    pub replicates: usize,
    /// Subsample sizes ⌊N^e⌋ for each exponent e.
    #[serde(default = "default_exponents")]
    pub n_exponents: Vec<f64>,
    #[serde(default = "default_grid")]
    pub b: Vec<usize>,
    #[serde(default = "default_grid")]
    pub r: Vec<usize>,
}

fn verify_methods() -> Vec<Method> {
    vec![Method::Af, Method::Tb, Method::Blb, Method::Sb, Method::Sdb]
}

fn default_m() -> usize {
    500
}

fn default_exponents() -> Vec<f64> {
    vec![0.4, 0.5, 0.6]
}

fn default_grid() -> Vec<usize> {
    vec![25, 50]
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { methods: verify_methods(), replicates: default_m(), n_exponents: default_exponents(), b: default_grid(), r: default_grid() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruthKind {
    /// Σ/N for the linear-regression generator.
    Analytic,
    /// Average inverse information over independent datasets (logistic).
    MonteCarlo,
    /// Large traditional bootstrap on the one available dataset.
    Bootstrap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_settings")]
    pub settings: usize,
    /// Originals draw R from ⌊U(lo, hi)⌋.
    #[serde(default = "default_r_range")]
    pub r_range: [f64; 2],
    /// Originals draw B from ⌊U(lo, hi)⌋.
    #[serde(default = "default_b_range")]
    pub b_range: [f64; 2],
    #[serde(default = "tuned_methods")]
    pub methods: Vec<Method>,
    /// Chosen from the data source when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthKind>,
    /// Monte-Carlo datasets (logistic) or bootstrap resamples (file data).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_replicates: Option<usize>,
    /// Where a bootstrap truth matrix is cached between runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_cache: Option<PathBuf>,
    /// Use these originals instead of drawing them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub originals: Option<Vec<(usize, usize)>>,
    /// Run every tuned method with its original settings instead.
    #[serde(default)]
    pub force_original: bool,
}

fn default_repeats() -> usize {
    20
}

fn default_settings() -> usize {
    6
}

fn default_r_range() -> [f64; 2] {
    [15.0, 30.0]
}

fn default_b_range() -> [f64; 2] {
    [2500.0, 5000.0]
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            repeats: default_repeats(),
            settings: default_settings(),
            r_range: default_r_range(),
            b_range: default_b_range(),
            methods: tuned_methods(),
            truth: None,
            truth_replicates: None,
            truth_cache: None,
            originals: None,
            force_original: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// Timings per pilot point; the median is used.
    #[serde(default = "default_timing_repeats")]
    pub repeats: usize,
    /// BLB pilot subsample size; ⌊N^0.7⌋ when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Replicates per SB/SDB pilot run.
    #[serde(default = "default_pilot_r")]
    pub pilot_r: usize,
    #[serde(default = "tuned_methods")]
    pub methods: Vec<Method>,
    /// Budget used to steer the SB/SDB refinement rounds; falls back to
    /// `tune.c_max`, then to the median predicted time of the BLB pilot grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_budget: Option<f64>,
    /// Where the fitted cost model is written.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_model_out: Option<PathBuf>,
}

fn default_grid_points() -> usize {
    12
}

fn default_timing_repeats() -> usize {
    3
}

fn default_pilot_r() -> usize {
    50
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        Self {
            grid_points: default_grid_points(),
            repeats: default_timing_repeats(),
            n: None,
            pilot_r: default_pilot_r(),
            methods: tuned_methods(),
            reference_budget: None,
            cost_model_out: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    #[default]
    Markdown,
    Json,
}

impl Format {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "markdown" | "md" => Ok(Self::Markdown),
            "json" => Ok(Self::Json),
            other => Err(Error::Unknown { kind: "format", name: other.into() }),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

/// A dataset together with a description for report metadata.
pub struct LoadedData {
    pub data: Dataset,
    pub description: String,
    pub rejected_rows: usize,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(p) = &cfg.cost_model_path {
            let resolved = if p.is_relative() { path.parent().unwrap_or(Path::new(".")).join(p) } else { p.clone() };
            cfg.cost_model_path = Some(resolved);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.data.generator, &self.data.path) {
            (Some(g), None) => {
                Generator::parse(g)?;
                if self.data.n_rows.is_none() {
                    return Err(Error::Config("generated data needs `n_rows`".into()));
                }
            }
            (None, Some(_)) => {}
            _ => return Err(Error::Config("[data] needs exactly one of `generator` and `path`".into())),
        }
        if self.cost_model.is_some() && self.cost_model_path.is_some() {
            return Err(Error::Config("give either an inline [cost_model] or `cost_model_path`, not both".into()));
        }
        if let Some(m) = &self.cost_model {
            m.validate()?;
        }
        if self.engine.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.verify.replicates < 1 || self.compare.repeats < 1 {
            return Err(Error::Config("replicate counts must be at least 1".into()));
        }
        for range in [self.compare.r_range, self.compare.b_range] {
            if !(range[0] >= 1.0 && range[1] > range[0]) {
                return Err(Error::Config(format!("invalid uniform range {range:?}")));
            }
        }
        if !crate::estimators::ESTIMATOR_NAMES.contains(&self.estimator.name.as_str()) {
            return Err(Error::Unknown { kind: "estimator", name: self.estimator.name.clone() });
        }
        Ok(())
    }

    pub fn generator(&self) -> Result<Option<Generator>> {
        self.data.generator.as_deref().map(Generator::parse).transpose()
    }

    /// The dataset for replicate `index`: a fresh draw for generators, the
    /// file contents otherwise.
    pub fn load_data(&self, seed: SeedSpec, index: u64) -> Result<LoadedData> {
        if let Some(g) = self.generator()? {
            let n = self.data.n_rows.expect("validated");
            let data = generate_data(g, n, self.data.dim, seed.child("dataset", index))?;
            return Ok(LoadedData { data, description: format!("{} (N = {n}): {}", g.name(), g.describe()), rejected_rows: 0 });
        }
        let path = self.data.path.as_ref().expect("validated");
        let spec = IngestSpec { columns: self.data.columns.clone(), signed_log: self.data.signed_log.clone() };
        let (data, stats) = ingest_csv(path, &spec)?;
        let data = match self.data.n_rows {
            Some(n) if n < data.n_rows() => data.select_rows(&(0..n).collect::<Vec<_>>())?,
            _ => data,
        };
        Ok(LoadedData {
            description: format!("{} (N = {}, {} rows rejected)", path.display(), data.n_rows(), stats.rejected),
            rejected_rows: stats.rejected,
            data,
        })
    }

    pub fn estimator(&self, data: &Dataset) -> Result<Arc<dyn Estimator>> {
        let base = resolve_estimator(&self.estimator.name, &self.estimator.roles, data)?;
        Ok(match self.estimator.transform {
            Some(kind) if kind != TransformKind::Identity => smooth_transform(base, kind),
            _ => base,
        })
    }

    /// The cost model from the inline table or the referenced file.
    pub fn cost_model(&self) -> Result<Option<CostModel>> {
        if let Some(m) = &self.cost_model {
            return Ok(Some(m.clone()));
        }
        match &self.cost_model_path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                let m: CostModel = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
                m.validate()?;
                Ok(Some(m))
            }
            None => Ok(None),
        }
    }

    /// Engine options for `data`, creating a spill file for disk sources.
    pub fn engine_options(&self, data: &Dataset, workers: usize) -> Result<EngineOptions> {
        let source = match self.engine.source {
            SourceKind::Memory => RowSource::Memory,
            SourceKind::Disk => RowSource::Disk(Arc::new(SpillFile::create(data)?)),
        };
        Ok(EngineOptions { workers, timing: self.engine.timing, source, keep_terms: false })
    }

    pub fn seed(&self) -> SeedSpec {
        SeedSpec::new(self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 7
[data]
generator = "normal"
n_rows = 100
"#;

    #[test]
    fn minimal_config_round_trips() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.verify.replicates, 500);
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_toml("[data]\n").is_err());
        assert!(ExperimentConfig::from_toml("[data]\ngenerator = \"normal\"\n").is_err());
        assert!(ExperimentConfig::from_toml("[data]\ngenerator = \"cauchy\"\nn_rows = 5\n").is_err());
        assert!(ExperimentConfig::from_toml(&format!("{MINIMAL}\n[estimator]\nname = \"median\"\n")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("{MINIMAL}\nbogus = 1\n")).is_err());
    }

    #[test]
    fn inline_cost_model_and_virtual_timing() {
        let text = format!("{MINIMAL}\n[cost_model]\nalpha1 = 1e-7\nalpha2 = 2e-6\n\n[engine]\ntiming = {{ kind = \"virtual\" }}\n");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.cost_model().unwrap().unwrap().alpha1, Some(1e-7));
        assert!(matches!(cfg.engine.timing, Timing::Virtual(_)));
    }

    #[test]
    fn generated_data_is_seeded_by_index() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let a = cfg.load_data(cfg.seed(), 0).unwrap().data;
        let b = cfg.load_data(cfg.seed(), 0).unwrap().data;
        let c = cfg.load_data(cfg.seed(), 1).unwrap().data;
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
