//! Study results and their CSV / manifest emission.

use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv error in {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("malformed cached reference {path}: {message}")]
    Cache { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> OutputError + '_ {
    move |source| OutputError::Csv { path: path.to_path_buf(), source }
}

/// Write rows of serializable records with a header row.
pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<(), OutputError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    /// Steps `N` or icosphere level.
    pub refinement: f64,
    /// Step size `τ` or mesh width `h`.
    pub size: f64,
    pub error: f64,
    /// Local order against the previous row.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub label: String,
    pub rows: Vec<ConvergenceRow>,
    pub norm: String,
    pub reference: String,
}

impl ConvergenceReport {
    /// Build rows from `(refinement, size, error)` triples, computing local
    /// orders `log(e_{i−1}/e_i) / log(size_{i−1}/size_i)`.
    pub fn new(label: impl Into<String>, norm: impl Into<String>, reference: impl Into<String>, data: &[(f64, f64, f64)]) -> Self {
        let rows = data
            .iter()
            .enumerate()
            .map(|(i, &(refinement, size, error))| {
                let order = (i > 0).then(|| {
                    let (_, s0, e0) = data[i - 1];
                    (e0 / error).ln() / (s0 / size).ln()
                });
                ConvergenceRow { refinement, size, error, order: order.filter(|o| o.is_finite()) }
            })
            .collect();
        ConvergenceReport { label: label.into(), rows, norm: norm.into(), reference: reference.into() }
    }

    /// Least-squares slope of `log error` against `log size`.
    pub fn fitted_slope(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> =
            self.rows.iter().filter(|r| r.error > 0.0 && r.size > 0.0).map(|r| (r.size.ln(), r.error.ln())).collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    }

    pub fn local_orders(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.order).collect()
    }

    pub fn write(&self, path: &Path) -> Result<(), OutputError> {
        write_csv(path, &self.rows)
    }
}

/// Index of emitted files together with the resolved configuration.
#[derive(Debug, Clone, Default)]
pub struct Manifest {
    pub command: String,
    pub outputs: Vec<(String, PathBuf)>,
    pub summary: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Manifest { command: command.into(), ..Default::default() }
    }

    pub fn output(&mut self, label: &str, path: PathBuf) {
        self.outputs.push((label.into(), path));
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.into(), value.to_string()));
    }

    /// Write `manifest.toml` into `dir`, embedding `config_toml` verbatim.
    pub fn write(&self, dir: &Path, config_toml: &str) -> Result<PathBuf, OutputError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut doc = toml::Table::new();
        doc.insert("command".into(), toml::Value::String(self.command.clone()));
        let outputs: toml::Table =
            self.outputs.iter().map(|(k, p)| (k.clone(), toml::Value::String(p.display().to_string()))).collect();
        doc.insert("outputs".into(), toml::Value::Table(outputs));
        let summary: toml::Table = self.summary.iter().map(|(k, v)| (k.clone(), toml::Value::String(v.clone()))).collect();
        doc.insert("summary".into(), toml::Value::Table(summary));
        let config: toml::Table = config_toml.parse().unwrap_or_default();
        doc.insert("config".into(), toml::Value::Table(config));
        let path = dir.join("manifest.toml");
        fs::write(&path, toml::to_string(&doc).expect("manifest serializes")).map_err(io_err(&path))?;
        Ok(path)
    }
}
