//! CSV ingestion for real datasets.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimators::Dataset;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IngestSpec {
    /// Columns to keep, in order; all columns when `None`.
    pub columns: Option<Vec<String>>,
    /// Columns mapped through sign(x)·ln|x| (zero stays zero).
    pub signed_log: Vec<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub accepted: usize,
    /// Rows dropped because a kept cell was empty or not a finite number.
    pub rejected: usize,
}

pub fn signed_log(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * x.abs().ln()
    }
}

pub fn ingest_csv(path: &Path, spec: &IngestSpec) -> Result<(Dataset, IngestStats)> {
    let file = std::fs::File::open(path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
    ingest_reader(file, spec)
}

pub fn ingest_reader<R: Read>(reader: R, spec: &IngestSpec) -> Result<(Dataset, IngestStats)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let names = spec.columns.clone().unwrap_or_else(|| header.clone());
    let index: Vec<usize> = names
        .iter()
        .map(|c| header.iter().position(|h| h == c).ok_or_else(|| Error::MissingColumn(c.clone())))
        .collect::<Result<_>>()?;
    for c in &spec.signed_log {
        if !names.contains(c) {
            return Err(Error::MissingColumn(c.clone()));
        }
    }
    let log_mask: Vec<bool> = names.iter().map(|c| spec.signed_log.contains(c)).collect();

    let mut values = Vec::new();
    let mut stats = IngestStats::default();
    let mut row = Vec::with_capacity(names.len());
    for record in rdr.records() {
        let record = record?;
        row.clear();
        let ok = index.iter().zip(&log_mask).all(|(&j, &log)| match record.get(j).map(str::parse::<f64>) {
            Some(Ok(v)) if v.is_finite() => {
                row.push(if log { signed_log(v) } else { v });
                true
            }
            _ => false,
        });
        if ok {
            values.extend_from_slice(&row);
            stats.accepted += 1;
        } else {
            stats.rejected += 1;
        }
    }
    if stats.rejected > 0 {
        log::warn!("rejected {} rows with missing or non-numeric cells", stats.rejected);
    }
    if stats.accepted == 0 {
        return Err(Error::EmptyDataset(format!("no numeric rows ({} rejected)", stats.rejected)));
    }
    Ok((Dataset::new(names, values)?, stats))
}
