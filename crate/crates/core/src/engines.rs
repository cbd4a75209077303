//! The four bootstrap variance engines: TB, BLB, SB and SDB.
//!
//! Replicates are grouped into fixed-size blocks. Blocks may run on any number
//! of workers, but each block is reduced sequentially and blocks are combined
//! in index order, so results are bit-identical for every worker count.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::os::unix::fs::FileExt;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{evaluate_full, Dataset, Estimator, WeightedView};
use crate::sampling::{multinomial_into, srswr_into, SeedSpec};

const BLOCK: usize = 64;

/// Largest tolerated fraction of degenerate replicates.
pub const SKIP_LIMIT: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Plug-in analytic formula; only meaningful to the MSE model.
    Af,
    Tb,
    Blb,
    Sb,
    Sdb,
}

impl Method {
    pub const ENGINES: [Method; 4] = [Method::Tb, Method::Blb, Method::Sb, Method::Sdb];

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "af" => Ok(Method::Af),
            "tb" => Ok(Method::Tb),
            "blb" => Ok(Method::Blb),
            "sb" => Ok(Method::Sb),
            "sdb" => Ok(Method::Sdb),
            _ => Err(Error::Unknown { kind: "method", name: s.into() }),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Af => "AF",
            Method::Tb => "TB",
            Method::Blb => "BLB",
            Method::Sb => "SB",
            Method::Sdb => "SDB",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    #[default]
    User,
    Tuned,
    Default,
}

/// Subsample size n, replicate count R and resamples per replicate B.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HyperParams {
    pub n: usize,
    pub r: usize,
    pub b: usize,
    #[serde(default)]
    pub provenance: Provenance,
}

impl HyperParams {
    pub fn new(n: usize, r: usize, b: usize) -> Self {
        Self { n, r, b, provenance: Provenance::User }
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// The parameters `method` actually uses on N rows: TB runs n = N, R = 1;
    /// SB and SDB run B = 1.
    pub fn normalized(self, method: Method, big_n: usize) -> Result<Self> {
        let out = match method {
            Method::Af => Self { n: big_n, r: 1, b: 1, ..self },
            Method::Tb => Self { n: big_n, r: 1, ..self },
            Method::Sb | Method::Sdb => Self { b: 1, ..self },
            Method::Blb => self,
        };
        if out.n == 0 || out.n > big_n {
            return Err(Error::InvalidShape(format!("subsample size n = {} outside 1..={big_n}", out.n)));
        }
        if out.r == 0 || out.b == 0 {
            return Err(Error::InvalidShape(format!("R = {} and B = {} must both be at least 1", out.r, out.b)));
        }
        Ok(out)
    }
}

/// Deterministic stand-in for wall-clock time, charged per unit of work.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VirtualClock {
    /// Seconds per random draw.
    pub per_draw: f64,
    /// Seconds per distinct point evaluated (raised to the cost exponent).
    pub per_eval: f64,
    /// Seconds per row copied out of the row source.
    pub per_fetch: f64,
}

impl Default for VirtualClock {
    fn default() -> Self {
        Self { per_draw: 4e-9, per_eval: 6e-9, per_fetch: 2e-7 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Timing {
    #[default]
    Wall,
    Virtual(VirtualClock),
}

/// Work performed by an engine run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkCount {
    pub draws: u64,
    pub eval_units: f64,
    pub rows_fetched: u64,
}

impl WorkCount {
    fn add(&mut self, o: &WorkCount) {
        self.draws += o.draws;
        self.eval_units += o.eval_units;
        self.rows_fetched += o.rows_fetched;
    }

    pub fn virtual_seconds(&self, clock: &VirtualClock) -> f64 {
        self.draws as f64 * clock.per_draw + self.eval_units * clock.per_eval + self.rows_fetched as f64 * clock.per_fetch
    }
}

/// Row-major f64 spill of a dataset, read back one row per positioned read.
#[derive(Debug)]
pub struct SpillFile {
    file: File,
    rows: usize,
    cols: usize,
    _dir: tempfile::TempDir,
}

impl SpillFile {
    pub fn create(data: &Dataset) -> Result<Self> {
        Self::create_in(data, &std::env::temp_dir())
    }

    pub fn create_in(data: &Dataset, dir: &Path) -> Result<Self> {
        let tmp = tempfile::Builder::new().prefix("subboot-spill").tempdir_in(dir)?;
        let path = tmp.path().join("rows.f64");
        let mut w = BufWriter::new(File::create(&path)?);
        for v in data.values() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        drop(w);
        Ok(Self { file: File::open(&path)?, rows: data.n_rows(), cols: data.n_cols(), _dir: tmp })
    }

    fn gather_into(&self, rows: &[usize], out: &mut Vec<f64>) -> Result<()> {
        let width = self.cols * 8;
        let mut buf = vec![0u8; width];
        out.clear();
        out.reserve(rows.len() * self.cols);
        for &i in rows {
            self.file.read_exact_at(&mut buf, (i * width) as u64)?;
            out.extend(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))));
        }
        Ok(())
    }
}

/// Where subsample rows are read from.
#[derive(Clone, Debug, Default)]
pub enum RowSource {
    #[default]
    Memory,
    /// Disk-resident rows; every subsample row costs one positioned read.
    Disk(Arc<SpillFile>),
}

#[derive(Clone, Debug)]
pub struct EngineOptions {
    pub workers: usize,
    pub timing: Timing,
    pub source: RowSource,
    /// Keep ‖θ̂ − center‖² of every term (for distributional tests).
    pub keep_terms: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self { workers: 1, timing: Timing::Wall, source: RowSource::Memory, keep_terms: false }
    }
}

/// A d×d estimate of Cov(θ̂) with the settings that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub method: Method,
    pub dim: usize,
    pub matrix: Vec<f64>,
    pub params: HyperParams,
    pub seed: u64,
    pub skipped: usize,
    pub attempted: usize,
    pub seconds: f64,
    pub work: WorkCount,
    #[serde(skip)]
    pub terms: Vec<f64>,
}

impl VarianceEstimate {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.dim + j]
    }

    /// SE² for the first coordinate.
    pub fn scalar(&self) -> f64 {
        self.matrix[0]
    }
}

#[derive(Default)]
struct Partial {
    sum: Vec<f64>,
    ok: usize,
    skipped: usize,
    work: WorkCount,
    terms: Vec<f64>,
}

impl Partial {
    fn new(d: usize) -> Self {
        Self { sum: vec![0.0; d * d], ..Default::default() }
    }

    fn push(&mut self, theta: &[f64], center: &[f64], scale: f64, keep: bool) {
        let d = center.len();
        let mut norm = 0.0;
        for i in 0..d {
            let di = theta[i] - center[i];
            norm += di * di;
            for j in i..d {
                self.sum[i * d + j] += scale * di * (theta[j] - center[j]);
            }
        }
        self.ok += 1;
        if keep {
            self.terms.push(scale * norm);
        }
    }

    fn merge(&mut self, o: Partial) {
        self.sum.iter_mut().zip(&o.sum).for_each(|(a, b)| *a += b);
        self.ok += o.ok;
        self.skipped += o.skipped;
        self.work.add(&o.work);
        self.terms.extend(o.terms);
    }
}

struct Run<'a> {
    data: &'a Dataset,
    est: &'a dyn Estimator,
    opts: &'a EngineOptions,
    seed: SeedSpec,
    gamma: f64,
}

impl Run<'_> {
    fn eval_cost(&self, distinct: usize) -> f64 {
        (distinct as f64).powf(self.gamma)
    }

    fn fetch(&self, rows: &[usize], out: &mut Vec<f64>) -> Result<()> {
        match &self.opts.source {
            RowSource::Memory => {
                self.data.gather_into(rows, out);
                Ok(())
            }
            RowSource::Disk(spill) => {
                if spill.rows != self.data.n_rows() || spill.cols != self.data.n_cols() {
                    return Err(Error::Contract("spill file does not match the dataset".into()));
                }
                spill.gather_into(rows, out)
            }
        }
    }

    /// Evaluates `units` in fixed blocks and reduces them in order.
    fn blocks<F>(&self, units: usize, d: usize, body: F) -> Result<Partial>
    where
        F: Fn(usize, &mut Partial) -> Result<()> + Sync,
    {
        let n_blocks = units.div_ceil(BLOCK);
        let do_block = |blk: usize| -> Result<Partial> {
            let mut part = Partial::new(d);
            for u in blk * BLOCK..((blk + 1) * BLOCK).min(units) {
                body(u, &mut part)?;
            }
            Ok(part)
        };
        let parts: Vec<Result<Partial>> = if self.opts.workers <= 1 {
            (0..n_blocks).map(do_block).collect()
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(self.opts.workers)
                .build()
                .map_err(|e| Error::Contract(format!("cannot start worker pool: {e}")))?;
            pool.install(|| (0..n_blocks).into_par_iter().map(do_block).collect())
        };
        let mut total = Partial::new(d);
        for p in parts {
            total.merge(p?);
        }
        Ok(total)
    }

    /// BLB with B resamples per replicate; SDB is the B = 1 case.
    fn little_bootstrap(&self, n: usize, r: usize, b: usize) -> Result<Partial> {
        let big_n = self.data.n_rows();
        let d = self.est.output_dim();
        let cols = self.data.n_cols();
        self.blocks(r, d, |rep, part| {
            let mut idx = Vec::with_capacity(n);
            let mut rows = Vec::new();
            let mut counts = Vec::with_capacity(n);
            let mut stream = self.seed.stream(rep as u64, 0);
            srswr_into(big_n, n, &mut stream, &mut idx)?;
            self.fetch(&idx, &mut rows)?;
            part.work.draws += n as u64;
            part.work.rows_fetched += n as u64;
            part.work.eval_units += self.eval_cost(n);
            let ones = vec![1.0; n];
            let center = match self.est.evaluate(&WeightedView::new(&rows, cols, &ones)?) {
                Ok(c) => c,
                Err(e) if e.is_replicate_degeneracy() => {
                    part.skipped += b;
                    return Ok(());
                }
                Err(e) => return Err(e),
            };
            let mut weights = vec![0.0; n];
            for k in 0..b {
                let mut s = self.seed.stream(rep as u64, k as u64 + 1);
                multinomial_into(n, big_n, &mut s, &mut counts)?;
                weights.iter_mut().zip(&counts).for_each(|(w, &c)| *w = c as f64);
                part.work.draws += n as u64;
                part.work.eval_units += self.eval_cost(n);
                match self.est.evaluate(&WeightedView::new(&rows, cols, &weights)?) {
                    Ok(theta) => part.push(&theta, &center, 1.0, self.opts.keep_terms),
                    Err(e) if e.is_replicate_degeneracy() => part.skipped += 1,
                    Err(e) => return Err(e),
                }
            }
            Ok(())
        })
    }

    fn subsampled(&self, n: usize, r: usize, full: &[f64]) -> Result<Partial> {
        let big_n = self.data.n_rows();
        let cols = self.data.n_cols();
        let scale = n as f64 / big_n as f64;
        self.blocks(r, full.len(), |rep, part| {
            let mut idx = Vec::with_capacity(n);
            let mut rows = Vec::new();
            let mut stream = self.seed.stream(rep as u64, 0);
            srswr_into(big_n, n, &mut stream, &mut idx)?;
            self.fetch(&idx, &mut rows)?;
            part.work.draws += n as u64;
            part.work.rows_fetched += n as u64;
            part.work.eval_units += self.eval_cost(n);
            let ones = vec![1.0; n];
            match self.est.evaluate(&WeightedView::new(&rows, cols, &ones)?) {
                Ok(theta) => part.push(&theta, full, scale, self.opts.keep_terms),
                Err(e) if e.is_replicate_degeneracy() => part.skipped += 1,
                Err(e) => return Err(e),
            }
            Ok(())
        })
    }

    fn traditional(&self, b: usize, full: &[f64]) -> Result<Partial> {
        let big_n = self.data.n_rows();
        self.blocks(b, full.len(), |k, part| {
            let mut idx = Vec::with_capacity(big_n);
            let mut stream = self.seed.stream(0, k as u64 + 1);
            srswr_into(big_n, big_n, &mut stream, &mut idx)?;
            let mut weights = vec![0.0; big_n];
            for &i in &idx {
                weights[i] += 1.0;
            }
            part.work.draws += big_n as u64;
            part.work.eval_units += self.eval_cost(big_n);
            match self.est.evaluate(&self.data.view(&weights)?) {
                Ok(theta) => part.push(&theta, full, 1.0, self.opts.keep_terms),
                Err(e) if e.is_replicate_degeneracy() => part.skipped += 1,
                Err(e) => return Err(e),
            }
            Ok(())
        })
    }
}

/// Runs `method` on `data`. Estimator binding and the full-sample estimate are
/// computed before the clock starts.
pub fn run_engine(
    method: Method,
    data: &Dataset,
    est: &Arc<dyn Estimator>,
    params: HyperParams,
    seed: SeedSpec,
    opts: &EngineOptions,
) -> Result<VarianceEstimate> {
    if method == Method::Af {
        return Err(Error::Contract("the analytic formula is not a resampling engine".into()));
    }
    let params = params.normalized(method, data.n_rows())?;
    let bound = Arc::clone(est).bind(data, seed)?;
    let run = Run { data, est: bound.as_ref(), opts, seed, gamma: bound.cost_exponent() };
    let full = match method {
        Method::Tb | Method::Sb => Some(evaluate_full(bound.as_ref(), data)?),
        _ => None,
    };

    let start = Instant::now();
    let (part, attempted) = match method {
        Method::Tb => (run.traditional(params.b, full.as_deref().expect("full estimate"))?, params.b),
        Method::Blb => (run.little_bootstrap(params.n, params.r, params.b)?, params.r * params.b),
        Method::Sdb => (run.little_bootstrap(params.n, params.r, 1)?, params.r),
        Method::Sb => (run.subsampled(params.n, params.r, full.as_deref().expect("full estimate"))?, params.r),
        Method::Af => unreachable!(),
    };
    let wall = start.elapsed().as_secs_f64();

    if part.skipped as f64 > SKIP_LIMIT * attempted as f64 || part.ok == 0 {
        return Err(Error::DataQuality { skipped: part.skipped, attempted });
    }
    if part.skipped > 0 {
        log::warn!("{method}: skipped {} of {attempted} degenerate replicates", part.skipped);
    }
    let d = bound.output_dim();
    let mut matrix = part.sum;
    for i in 0..d {
        for j in i..d {
            matrix[i * d + j] /= part.ok as f64;
            matrix[j * d + i] = matrix[i * d + j];
        }
    }
    let seconds = match opts.timing {
        Timing::Wall => wall,
        Timing::Virtual(clock) => part.work.virtual_seconds(&clock),
    };
    Ok(VarianceEstimate {
        method,
        dim: d,
        matrix,
        params,
        seed: seed.root_seed,
        skipped: part.skipped,
        attempted,
        seconds,
        work: part.work,
        terms: part.terms,
    })
}

pub fn tb_variance(data: &Dataset, est: &Arc<dyn Estimator>, b: usize, seed: SeedSpec, opts: &EngineOptions) -> Result<VarianceEstimate> {
    run_engine(Method::Tb, data, est, HyperParams::new(data.n_rows(), 1, b), seed, opts)
}

pub fn blb_variance(
    data: &Dataset,
    est: &Arc<dyn Estimator>,
    params: HyperParams,
    seed: SeedSpec,
    opts: &EngineOptions,
) -> Result<VarianceEstimate> {
    run_engine(Method::Blb, data, est, params, seed, opts)
}

pub fn sb_variance(data: &Dataset, est: &Arc<dyn Estimator>, n: usize, r: usize, seed: SeedSpec, opts: &EngineOptions) -> Result<VarianceEstimate> {
    run_engine(Method::Sb, data, est, HyperParams::new(n, r, 1), seed, opts)
}

pub fn sdb_variance(data: &Dataset, est: &Arc<dyn Estimator>, n: usize, r: usize, seed: SeedSpec, opts: &EngineOptions) -> Result<VarianceEstimate> {
    run_engine(Method::Sdb, data, est, HyperParams::new(n, r, 1), seed, opts)
}
