//! Tabular reports rendered as CSV, Markdown or JSON.
//!
//! Rendering is a pure function of the report contents, so identical runs
//! produce byte-identical files.

use std::path::Path;

use serde_json::{json, Value};

use crate::bench::config::Format;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Empty,
    Text(String),
    Int(i64),
    Float(f64),
}

impl Cell {
    pub fn text(s: impl Into<String>) -> Self {
        Cell::Text(s.into())
    }

    pub fn opt(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Float)
    }

    fn render(&self) -> String {
        match self {
            Cell::Empty => String::new(),
            Cell::Text(s) => s.clone(),
            Cell::Int(i) => i.to_string(),
            Cell::Float(v) => format_float(*v),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Empty => Value::Null,
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Int(i) => json!(i),
            Cell::Float(v) if v.is_finite() => json!(v),
            Cell::Float(v) => Value::String(format_float(*v)),
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else if v == 0.0 {
        "0".into()
    } else if (1e-3..1e4).contains(&v.abs()) {
        format!("{v:.6}")
    } else {
        format!("{v:.6e}")
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub title: String,
    /// Key/value lines such as seed, generator and data description.
    pub metadata: Vec<(String, String)>,
    /// Effective configuration, echoed verbatim.
    pub config: Option<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(title: impl Into<String>, columns: &[&str]) -> Self {
        Self { title: title.into(), columns: columns.iter().map(|c| c.to_string()).collect(), ..Self::default() }
    }

    pub fn meta(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.metadata.push((key.into(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric value of `name` in row `i`, if present.
    pub fn value(&self, i: usize, name: &str) -> Option<f64> {
        match self.rows.get(i)?.get(self.column(name)?)? {
            Cell::Float(v) => Some(*v),
            Cell::Int(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn render(&self, format: Format) -> Result<String> {
        if self.rows.is_empty() {
            return Err(Error::EmptyResults);
        }
        Ok(match format {
            Format::Csv => self.csv()?,
            Format::Markdown => self.markdown(),
            Format::Json => self.json(),
        })
    }

    pub fn write(&self, path: &Path, format: Format) -> Result<()> {
        let text = self.render(format)?;
        std::fs::write(path, text).map_err(|source| Error::Write { path: path.to_path_buf(), source })
    }

    fn csv(&self) -> Result<String> {
        let mut out = String::new();
        out.push_str(&format!("# {}\n", self.title));
        for (k, v) in &self.metadata {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        for line in self.config.iter().flat_map(|c| c.lines()) {
            out.push_str(&format!("# config: {line}\n"));
        }
        for n in &self.notes {
            out.push_str(&format!("# note: {n}\n"));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
        Ok(out)
    }

    fn markdown(&self) -> String {
        let mut out = format!("# {}\n\n", self.title);
        for (k, v) in &self.metadata {
            out.push_str(&format!("- {k}: {v}\n"));
        }
        if !self.metadata.is_empty() {
            out.push('\n');
        }
        out.push_str(&format!("| {} |\n", self.columns.join(" | ")));
        out.push_str(&format!("|{}\n", "---|".repeat(self.columns.len())));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| c.render().replace('|', "\\|")).collect();
            out.push_str(&format!("| {} |\n", cells.join(" | ")));
        }
        if !self.notes.is_empty() {
            out.push('\n');
            for n in &self.notes {
                out.push_str(&format!("- {n}\n"));
            }
        }
        if let Some(c) = &self.config {
            out.push_str(&format!("\n## Configuration\n\n```toml\n{}\n```\n", c.trim_end()));
        }
        out
    }

    fn json(&self) -> String {
        let metadata: serde_json::Map<String, Value> = self.metadata.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect();
        let rows: Vec<Value> = self.rows.iter().map(|r| Value::Array(r.iter().map(Cell::json).collect())).collect();
        let doc = json!({
            "title": self.title,
            "metadata": metadata,
            "columns": self.columns,
            "rows": rows,
            "notes": self.notes,
            "config": self.config,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("json report");
        s.push('\n');
        s
    }
}
