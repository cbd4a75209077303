//! Statistics computable from a weighted data representation.
//!
//! A [`WeightedView`] is a block of distinct rows plus one non-negative weight
//! per row. Multinomial resamples of size N over a subsample of n rows are
//! evaluated through such a view at a cost governed by n, never by N.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{srswr, SeedSpec};

/// Column-oriented numeric sample stored row-major: N rows, p named columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    columns: Vec<String>,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(columns: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let p = columns.len();
        if p == 0 {
            return Err(Error::InvalidDataset("at least one column is required".into()));
        }
        if values.len() % p != 0 {
            return Err(Error::InvalidDataset(format!("{} values do not fill rows of {p} columns", values.len())));
        }
        if values.is_empty() {
            return Err(Error::EmptyDataset("no rows".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!("non-finite value at row {}, column `{}`", pos / p, columns[pos % p])));
        }
        Ok(Self { columns, values })
    }

    /// Builds a dataset from named columns of equal length.
    pub fn from_columns(columns: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let n = columns.first().map(|c| c.1.len()).unwrap_or(0);
        if columns.iter().any(|c| c.1.len() != n) {
            return Err(Error::InvalidDataset("columns differ in length".into()));
        }
        let p = columns.len();
        let mut values = vec![0.0; n * p];
        for (j, (_, col)) in columns.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                values[i * p + j] = *v;
            }
        }
        Self::new(columns.into_iter().map(|c| c.0).collect(), values)
    }

    /// A single unnamed-style column `x`.
    pub fn univariate(values: Vec<f64>) -> Result<Self> {
        Self::new(vec!["x".into()], values)
    }

    pub fn n_rows(&self) -> usize {
        self.values.len() / self.columns.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.values[i * p..(i + 1) * p]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().skip(j).step_by(self.n_cols()).copied().collect()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    /// Copies the given rows (in order, duplicates kept) into `out`.
    pub fn gather_into(&self, rows: &[usize], out: &mut Vec<f64>) {
        let p = self.n_cols();
        out.clear();
        out.reserve(rows.len() * p);
        for &i in rows {
            out.extend_from_slice(&self.values[i * p..(i + 1) * p]);
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        let mut values = Vec::new();
        self.gather_into(rows, &mut values);
        Dataset::new(self.columns.clone(), values)
    }

    /// View over all rows with the supplied weights.
    pub fn view<'a>(&'a self, weights: &'a [f64]) -> Result<WeightedView<'a>> {
        WeightedView::new(&self.values, self.n_cols(), weights)
    }
}

/// Distinct rows with one weight each.
#[derive(Clone, Copy, Debug)]
pub struct WeightedView<'a> {
    values: &'a [f64],
    ncols: usize,
    weights: &'a [f64],
}

impl<'a> WeightedView<'a> {
    pub fn new(values: &'a [f64], ncols: usize, weights: &'a [f64]) -> Result<Self> {
        if ncols == 0 || values.len() != weights.len() * ncols {
            return Err(Error::InvalidShape(format!(
                "view of {} values with {ncols} columns does not match {} weights",
                values.len(),
                weights.len()
            )));
        }
        Ok(Self { values, ncols, weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &'a [f64] {
        self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Iterates over (row, weight) pairs, skipping zero-weight rows.
    pub fn rows(&self) -> impl Iterator<Item = (&'a [f64], f64)> + '_ {
        self.values
            .chunks_exact(self.ncols)
            .zip(self.weights.iter().copied())
            .filter(|(_, w)| *w != 0.0)
    }
}

/// A statistic θ̂ evaluated on weighted views.
pub trait Estimator: Send + Sync + fmt::Debug {
    fn name(&self) -> String;

    fn output_dim(&self) -> usize;

    /// Exponent γ of evaluation cost in the number of distinct points.
    fn cost_exponent(&self) -> f64 {
        1.0
    }

    fn evaluate(&self, view: &WeightedView<'_>) -> Result<Vec<f64>>;

    /// Per-row vectors whose sample mean the estimator is a smooth function of.
    /// Their moments drive the MSE model and the tuner.
    fn moment_representation(&self, data: &Dataset) -> Result<Dataset>;

    /// Closed-form Cov(θ̂) estimate from the full sample, when one exists.
    fn analytic_variance(&self, _data: &Dataset) -> Option<Result<Vec<f64>>> {
        None
    }

    /// Binds run-level state (such as a pilot fit) before replicates start.
    fn bind(self: Arc<Self>, _data: &Dataset, _seed: SeedSpec) -> Result<Arc<dyn Estimator>>;
}

/// Evaluates `est` on every row of `data` with unit weight.
pub fn evaluate_full(est: &dyn Estimator, data: &Dataset) -> Result<Vec<f64>> {
    let ones = vec![1.0; data.n_rows()];
    est.evaluate(&data.view(&ones)?)
}

fn dataset_from_rows(columns: Vec<String>, rows: impl Iterator<Item = Vec<f64>>) -> Result<Dataset> {
    let values: Vec<f64> = rows.flatten().collect();
    Dataset::new(columns, values)
}

fn solve_spd(gram: Vec<f64>, rhs: Vec<f64>, d: usize, what: &'static str) -> Result<Vec<f64>> {
    let g = DMatrix::from_row_slice(d, d, &gram);
    let scale = (0..d).map(|i| g[(i, i)]).fold(0.0f64, f64::max);
    if !(scale > 0.0) {
        return Err(Error::RankDeficient(what));
    }
    let chol = g.clone().cholesky().ok_or(Error::RankDeficient(what))?;
    let l = chol.l();
    if (0..d).any(|i| l[(i, i)] * l[(i, i)] <= 1e-12 * scale) {
        return Err(Error::RankDeficient(what));
    }
    let sol = chol.solve(&DVector::from_vec(rhs));
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::RankDeficient(what));
    }
    Ok(sol.iter().copied().collect())
}

/// Weighted sample mean of selected columns.
#[derive(Clone, Debug)]
pub struct MeanEstimator {
    columns: Vec<usize>,
    names: Vec<String>,
}

impl MeanEstimator {
    pub fn new(data: &Dataset, columns: &[String]) -> Result<Self> {
        let idx = columns.iter().map(|c| data.column_index(c)).collect::<Result<Vec<_>>>()?;
        if idx.is_empty() {
            return Err(Error::Config("mean estimator needs at least one column".into()));
        }
        Ok(Self { columns: idx, names: columns.to_vec() })
    }

    /// Mean over every column of `data`.
    pub fn all_columns(data: &Dataset) -> Self {
        Self { columns: (0..data.n_cols()).collect(), names: data.columns().to_vec() }
    }
}

impl Estimator for MeanEstimator {
    fn name(&self) -> String {
        "mean".into()
    }

    fn output_dim(&self) -> usize {
        self.columns.len()
    }

    fn evaluate(&self, view: &WeightedView<'_>) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.columns.len()];
        let mut total = 0.0;
        for (row, w) in view.rows() {
            total += w;
            for (a, &j) in acc.iter_mut().zip(&self.columns) {
                *a += w * row[j];
            }
        }
        if !(total > 0.0) {
            return Err(Error::DegenerateView);
        }
        acc.iter_mut().for_each(|a| *a /= total);
        Ok(acc)
    }

    fn moment_representation(&self, data: &Dataset) -> Result<Dataset> {
        dataset_from_rows(
            self.names.clone(),
            (0..data.n_rows()).map(|i| {
                let row = data.row(i);
                self.columns.iter().map(|&j| row[j]).collect()
            }),
        )
    }

    fn analytic_variance(&self, data: &Dataset) -> Option<Result<Vec<f64>>> {
        Some((|| {
            let rep = self.moment_representation(data)?;
            let n = rep.n_rows() as f64;
            let cov = crate::moments::covariance(&rep);
            Ok(cov.into_iter().map(|c| c / n).collect())
        })())
    }

    fn bind(self: Arc<Self>, _data: &Dataset, _seed: SeedSpec) -> Result<Arc<dyn Estimator>> {
        Ok(self)
    }
}

/// Weighted least squares without intercept: solves (Σ w x xᵀ) β = Σ w x y.
#[derive(Clone, Debug)]
pub struct OlsEstimator {
    x: Vec<usize>,
    y: usize,
}

impl OlsEstimator {
    pub fn new(data: &Dataset, x: &[String], y: &str) -> Result<Self> {
        let xi = x.iter().map(|c| data.column_index(c)).collect::<Result<Vec<_>>>()?;
        if xi.is_empty() {
            return Err(Error::Config("ols needs at least one covariate".into()));
        }
        Ok(Self { x: xi, y: data.column_index(y)? })
    }
}

fn cross_products(x: &[usize], row: &[f64]) -> Vec<f64> {
    let d = x.len();
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    out.extend(x.iter().map(|&j| row[j] * row[j]));
    for a in 0..d {
        for b in a + 1..d {
            out.push(row[x[a]] * row[x[b]]);
        }
    }
    out
}

fn cross_product_names(prefix: &str, d: usize) -> Vec<String> {
    let mut names: Vec<String> = (0..d).map(|j| format!("{prefix}x{j}x{j}")).collect();
    for a in 0..d {
        for b in a + 1..d {
            names.push(format!("{prefix}x{a}x{b}"));
        }
    }
    names
}

impl Estimator for OlsEstimator {
    fn name(&self) -> String {
        "ols".into()
    }

    fn output_dim(&self) -> usize {
        self.x.len()
    }

    fn evaluate(&self, view: &WeightedView<'_>) -> Result<Vec<f64>> {
        let d = self.x.len();
        let mut gram = vec![0.0; d * d];
        let mut rhs = vec![0.0; d];
        for (row, w) in view.rows() {
            let y = row[self.y];
            for a in 0..d {
                let xa = w * row[self.x[a]];
                rhs[a] += xa * y;
                for b in a..d {
                    gram[a * d + b] += xa * row[self.x[b]];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                gram[a * d + b] = gram[b * d + a];
            }
        }
        solve_spd(gram, rhs, d, "ols gram matrix")
    }

    fn moment_representation(&self, data: &Dataset) -> Result<Dataset> {
        let d = self.x.len();
        let mut names = cross_product_names("", d);
        names.extend((0..d).map(|j| format!("x{j}y")));
        dataset_from_rows(
            names,
            (0..data.n_rows()).map(|i| {
                let row = data.row(i);
                let mut v = cross_products(&self.x, row);
                v.extend(self.x.iter().map(|&j| row[j] * row[self.y]));
                v
            }),
        )
    }

    fn bind(self: Arc<Self>, _data: &Dataset, _seed: SeedSpec) -> Result<Arc<dyn Estimator>> {
        Ok(self)
    }
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// One Newton step on the weighted logistic log-likelihood from a pilot β̃.
#[derive(Clone, Debug)]
pub struct LogisticOneStep {
    x: Vec<usize>,
    y: usize,
    pilot: Option<Vec<f64>>,
}

impl LogisticOneStep {
    pub fn new(data: &Dataset, x: &[String], y: &str) -> Result<Self> {
        let xi = x.iter().map(|c| data.column_index(c)).collect::<Result<Vec<_>>>()?;
        if xi.is_empty() {
            return Err(Error::Config("logistic regression needs at least one covariate".into()));
        }
        let yi = data.column_index(y)?;
        if (0..data.n_rows()).any(|i| {
            let v = data.row(i)[yi];
            v != 0.0 && v != 1.0
        }) {
            return Err(Error::InvalidDataset(format!("response `{y}` must be binary")));
        }
        Ok(Self { x: xi, y: yi, pilot: None })
    }

    pub fn with_pilot(mut self, pilot: Vec<f64>) -> Result<Self> {
        if pilot.len() != self.x.len() {
            return Err(Error::InvalidShape(format!("pilot has {} entries, expected {}", pilot.len(), self.x.len())));
        }
        self.pilot = Some(pilot);
        Ok(self)
    }

    pub fn pilot(&self) -> Option<&[f64]> {
        self.pilot.as_deref()
    }

    /// A single Newton step from `beta` on the weighted likelihood.
    pub fn newton_step(&self, view: &WeightedView<'_>, beta: &[f64]) -> Result<Vec<f64>> {
        let d = self.x.len();
        let mut info = vec![0.0; d * d];
        let mut score = vec![0.0; d];
        for (row, w) in view.rows() {
            let eta: f64 = self.x.iter().zip(beta).map(|(&j, b)| row[j] * b).sum();
            let p = sigmoid(eta);
            let omega = w * p * (1.0 - p);
            let resid = w * (row[self.y] - p);
            for a in 0..d {
                let xa = row[self.x[a]];
                score[a] += resid * xa;
                for b in a..d {
                    info[a * d + b] += omega * xa * row[self.x[b]];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                info[a * d + b] = info[b * d + a];
            }
        }
        let step = solve_spd(info, score, d, "logistic information matrix")?;
        Ok(beta.iter().zip(step).map(|(b, s)| b + s).collect())
    }

    /// Full Newton iteration to the weighted maximum-likelihood estimate.
    pub fn fit(&self, view: &WeightedView<'_>) -> Result<Vec<f64>> {
        let mut beta = vec![0.0; self.x.len()];
        for _ in 0..100 {
            let next = self.newton_step(view, &beta)?;
            let delta = next.iter().zip(&beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            beta = next;
            if delta < 1e-10 {
                return Ok(beta);
            }
        }
        Ok(beta)
    }
}

impl Estimator for LogisticOneStep {
    fn name(&self) -> String {
        "logit1".into()
    }

    fn output_dim(&self) -> usize {
        self.x.len()
    }

    fn evaluate(&self, view: &WeightedView<'_>) -> Result<Vec<f64>> {
        let pilot = self
            .pilot
            .as_deref()
            .ok_or_else(|| Error::Contract("logistic one-step evaluated before a pilot was bound".into()))?;
        self.newton_step(view, pilot)
    }

    fn moment_representation(&self, data: &Dataset) -> Result<Dataset> {
        let beta = match &self.pilot {
            Some(b) => b.clone(),
            None => {
                let ones = vec![1.0; data.n_rows()];
                self.fit(&data.view(&ones)?)?
            }
        };
        let d = self.x.len();
        let mut names = cross_product_names("w", d);
        names.extend((0..d).map(|j| format!("x{j}r")));
        dataset_from_rows(
            names,
            (0..data.n_rows()).map(|i| {
                let row = data.row(i);
                let eta: f64 = self.x.iter().zip(&beta).map(|(&j, b)| row[j] * b).sum();
                let p = sigmoid(eta);
                let omega = p * (1.0 - p);
                let mut v: Vec<f64> = cross_products(&self.x, row).into_iter().map(|c| omega * c).collect();
                v.extend(self.x.iter().map(|&j| row[j] * (row[self.y] - p)));
                v
            }),
        )
    }

    /// Fits the pilot once on a uniform subsample of size ⌊N^0.7⌋.
    fn bind(self: Arc<Self>, data: &Dataset, seed: SeedSpec) -> Result<Arc<dyn Estimator>> {
        if self.pilot.is_some() {
            return Ok(self);
        }
        let big_n = data.n_rows();
        let m = ((big_n as f64).powf(0.7).floor() as usize).clamp(1, big_n);
        let mut stream = seed.child("logit-pilot", 0).stream(0, 0);
        let rows = srswr(big_n, m, &mut stream)?;
        let sub = data.select_rows(rows.as_slice())?;
        let ones = vec![1.0; m];
        let pilot = self.fit(&sub.view(&ones)?)?;
        Ok(Arc::new(LogisticOneStep { pilot: Some(pilot), ..(*self).clone() }))
    }
}

/// Correlation of X and Y over rows whose indicator is 1 (observed).
#[derive(Clone, Debug)]
pub struct MissingCorrelation {
    x: usize,
    y: usize,
    w: usize,
}

impl MissingCorrelation {
    pub fn new(data: &Dataset, x: &str, y: &str, w: &str) -> Result<Self> {
        let wi = data.column_index(w)?;
        if (0..data.n_rows()).any(|i| {
            let v = data.row(i)[wi];
            v != 0.0 && v != 1.0
        }) {
            return Err(Error::InvalidDataset(format!("indicator `{w}` must be 0/1")));
        }
        Ok(Self { x: data.column_index(x)?, y: data.column_index(y)?, w: wi })
    }
}

impl Estimator for MissingCorrelation {
    fn name(&self) -> String {
        "misscorr".into()
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn evaluate(&self, view: &WeightedView<'_>) -> Result<Vec<f64>> {
        let (mut n, mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for (row, f) in view.rows() {
            let v = f * row[self.w];
            if v == 0.0 {
                continue;
            }
            let (x, y) = (row[self.x], row[self.y]);
            n += v;
            sx += v * x;
            sy += v * y;
            sxx += v * x * x;
            syy += v * y * y;
            sxy += v * x * y;
        }
        if n < 2.0 {
            return Err(Error::DegenerateCorrelation);
        }
        let cxx = sxx - sx * sx / n;
        let cyy = syy - sy * sy / n;
        let cxy = sxy - sx * sy / n;
        if cxx <= 1e-12 * sxx.max(f64::MIN_POSITIVE) || cyy <= 1e-12 * syy.max(f64::MIN_POSITIVE) {
            return Err(Error::DegenerateCorrelation);
        }
        Ok(vec![(cxy / (cxx * cyy).sqrt()).clamp(-1.0, 1.0)])
    }

    fn moment_representation(&self, data: &Dataset) -> Result<Dataset> {
        let names = ["wx", "wx2", "wy", "wy2", "wxy"].map(String::from).to_vec();
        dataset_from_rows(
            names,
            (0..data.n_rows()).map(|i| {
                let row = data.row(i);
                let (x, y, w) = (row[self.x], row[self.y], row[self.w]);
                vec![w * x, w * x * x, w * y, w * y * y, w * x * y]
            }),
        )
    }

    fn bind(self: Arc<Self>, _data: &Dataset, _seed: SeedSpec) -> Result<Arc<dyn Estimator>> {
        Ok(self)
    }
}

/// Instrumental-variable ratio Σ w z y / Σ w z x.
#[derive(Clone, Debug)]
pub struct IvEstimator {
    x: usize,
    y: usize,
    z: usize,
}

impl IvEstimator {
    pub fn new(data: &Dataset, x: &str, y: &str, z: &str) -> Result<Self> {
        Ok(Self { x: data.column_index(x)?, y: data.column_index(y)?, z: data.column_index(z)? })
    }
}

impl Estimator for IvEstimator {
    fn name(&self) -> String {
        "iv".into()
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn evaluate(&self, view: &WeightedView<'_>) -> Result<Vec<f64>> {
        let (mut num, mut den, mut scale) = (0.0, 0.0, 0.0);
        for (row, w) in view.rows() {
            let z = row[self.z];
            num += w * z * row[self.y];
            den += w * z * row[self.x];
            scale += (w * z * row[self.x]).abs();
        }
        if den == 0.0 || den.abs() <= 1e-14 * scale {
            return Err(Error::DegenerateInstrument);
        }
        Ok(vec![num / den])
    }

    fn moment_representation(&self, data: &Dataset) -> Result<Dataset> {
        dataset_from_rows(
            vec!["zy".into(), "zx".into()],
            (0..data.n_rows()).map(|i| {
                let row = data.row(i);
                vec![row[self.z] * row[self.y], row[self.z] * row[self.x]]
            }),
        )
    }

    fn bind(self: Arc<Self>, _data: &Dataset, _seed: SeedSpec) -> Result<Arc<dyn Estimator>> {
        Ok(self)
    }
}

/// A smooth map applied to the output of a base estimator.
pub type SmoothMap = Arc<dyn Fn(&[f64]) -> Option<Vec<f64>> + Send + Sync>;

/// θ̂ = g(base(view)).
#[derive(Clone)]
pub struct SmoothTransform {
    base: Arc<dyn Estimator>,
    g: SmoothMap,
    label: String,
    dim: usize,
}

impl fmt::Debug for SmoothTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothTransform").field("base", &self.base).field("g", &self.label).finish()
    }
}

impl SmoothTransform {
    pub fn new(base: Arc<dyn Estimator>, label: impl Into<String>, dim: usize, g: SmoothMap) -> Self {
        Self { base, g, label: label.into(), dim }
    }
}

impl Estimator for SmoothTransform {
    fn name(&self) -> String {
        format!("{}({})", self.label, self.base.name())
    }

    fn output_dim(&self) -> usize {
        self.dim
    }

    fn cost_exponent(&self) -> f64 {
        self.base.cost_exponent()
    }

    fn evaluate(&self, view: &WeightedView<'_>) -> Result<Vec<f64>> {
        let inner = self.base.evaluate(view)?;
        match (self.g)(&inner) {
            Some(out) if out.len() == self.dim && out.iter().all(|v| v.is_finite()) => Ok(out),
            _ => Err(Error::Domain),
        }
    }

    fn moment_representation(&self, data: &Dataset) -> Result<Dataset> {
        self.base.moment_representation(data)
    }

    fn bind(self: Arc<Self>, data: &Dataset, seed: SeedSpec) -> Result<Arc<dyn Estimator>> {
        let base = Arc::clone(&self.base).bind(data, seed)?;
        Ok(Arc::new(SmoothTransform { base, ..(*self).clone() }))
    }
}

/// Built-in elementwise transforms addressable by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    Identity,
    Square,
    Exp,
    Log,
}

impl TransformKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "identity" => Ok(Self::Identity),
            "square" => Ok(Self::Square),
            "exp" => Ok(Self::Exp),
            "log" => Ok(Self::Log),
            other => Err(Error::Unknown { kind: "transform", name: other.into() }),
        }
    }

    fn label(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Square => "square",
            Self::Exp => "exp",
            Self::Log => "log",
        }
    }
}

/// Composes `base` with an elementwise built-in transform.
pub fn smooth_transform(base: Arc<dyn Estimator>, kind: TransformKind) -> Arc<dyn Estimator> {
    let dim = base.output_dim();
    let g: SmoothMap = match kind {
        TransformKind::Identity => Arc::new(|v: &[f64]| Some(v.to_vec())),
        TransformKind::Square => Arc::new(|v: &[f64]| Some(v.iter().map(|x| x * x).collect())),
        TransformKind::Exp => Arc::new(|v: &[f64]| Some(v.iter().map(|x| x.exp()).collect())),
        TransformKind::Log => Arc::new(|v: &[f64]| v.iter().map(|&x| (x > 0.0).then(|| x.ln())).collect()),
    };
    Arc::new(SmoothTransform::new(base, kind.label(), dim, g))
}

/// Names resolvable by [`resolve_estimator`].
pub const ESTIMATOR_NAMES: &[&str] = &["mean", "ols", "logit1", "misscorr", "iv"];

/// Which dataset columns play which role. Unset roles fall back to the
/// conventional names `x`, `y`, `z`, `w`; regression covariates default to
/// every column other than the response.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnRoles {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<String>,
}

impl ColumnRoles {
    fn y_or_default(&self) -> &str {
        self.y.as_deref().unwrap_or("y")
    }

    fn single_x(&self) -> Result<&str> {
        match self.x.as_deref() {
            None => Ok("x"),
            Some([one]) => Ok(one),
            Some(_) => Err(Error::Config("this estimator takes exactly one x column".into())),
        }
    }

    fn covariates(&self, data: &Dataset) -> Vec<String> {
        match &self.x {
            Some(x) => x.clone(),
            None => {
                let y = self.y_or_default();
                data.columns().iter().filter(|c| c.as_str() != y).cloned().collect()
            }
        }
    }
}

/// Looks up a registered estimator by name and binds its columns.
pub fn resolve_estimator(name: &str, roles: &ColumnRoles, data: &Dataset) -> Result<Arc<dyn Estimator>> {
    Ok(match name {
        "mean" => match &roles.x {
            Some(cols) => Arc::new(MeanEstimator::new(data, cols)?),
            None => Arc::new(MeanEstimator::all_columns(data)),
        },
        "ols" => Arc::new(OlsEstimator::new(data, &roles.covariates(data), roles.y_or_default())?),
        "logit1" => Arc::new(LogisticOneStep::new(data, &roles.covariates(data), roles.y_or_default())?),
        "misscorr" => Arc::new(MissingCorrelation::new(
            data,
            roles.single_x()?,
            roles.y_or_default(),
            roles.w.as_deref().unwrap_or("w"),
        )?),
        "iv" => Arc::new(IvEstimator::new(
            data,
            roles.single_x()?,
            roles.y_or_default(),
            roles.z.as_deref().unwrap_or("z"),
        )?),
        other => return Err(Error::Unknown { kind: "estimator", name: other.into() }),
    })
}
