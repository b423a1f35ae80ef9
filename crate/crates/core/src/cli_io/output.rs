//! Result bundle: JSON summary plus CSV tables.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::config::RunConfig;
use super::metrics::ErrorMetrics;
use crate::assembly::SolvedModel;
use crate::bayesopt::{BoHistory, StopReason};
use crate::error::{KapiError, Result};

pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const HISTORY_FILE: &str = "loss_history.csv";
pub const KERNELS_FILE: &str = "kernels.csv";
pub const SOLUTION_FILE: &str = "solution.csv";

/// Scalars of a finished run.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Summary {
    pub kind: String,
    pub problem: String,
    pub seed: u64,
    pub nu: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    pub n_kernels: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_evaluations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_reason: Option<StopReason>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub w_opt: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub errors: Option<ErrorMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_est: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu_est: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative_error: Option<f64>,
    /// Baseline study: smallest accepted value and every attempted `(nu, loss)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu_solvable: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub schedule_losses: Vec<(f64, f64)>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub clusters: Vec<(f64, f64)>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub block_losses: Vec<f64>,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelRow {
    /// Time slab index; zero for single-domain runs.
    pub block: usize,
    /// Mixture component, zero for the baseline.
    pub component: usize,
    pub center: Vec<f64>,
    pub width: Vec<f64>,
    pub coefficient: f64,
}

pub fn kernel_rows(model: &SolvedModel, component_of: &[usize], block: usize) -> Vec<KernelRow> {
    model
        .basis
        .kernels()
        .iter()
        .zip(&model.coefficients)
        .enumerate()
        .map(|(i, (k, &c))| KernelRow {
            block,
            component: component_of.get(i).copied().unwrap_or(0),
            center: k.center().to_vec(),
            width: k.width().to_vec(),
            coefficient: c,
        })
        .collect()
}

/// Predictions on the test mesh, with the reference when one exists.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolutionTable {
    pub axes: Vec<String>,
    pub points: Vec<Vec<f64>>,
    pub predicted: Vec<f64>,
    pub reference: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct ResultBundle {
    pub config: RunConfig,
    pub summary: Summary,
    /// Parameter names and the optimizer history, absent for fixed runs.
    pub history: Option<(Vec<String>, BoHistory)>,
    pub kernels: Vec<KernelRow>,
    pub solution: SolutionTable,
}

fn num(v: f64) -> String {
    format!("{v:.15e}")
}

fn csv_err(path: &Path, e: csv::Error) -> KapiError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => KapiError::Io {
            path: path.display().to_string(),
            source,
        },
        other => KapiError::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(format!("{other:?}")),
        },
    }
}

fn write_table(path: &Path, header: Vec<String>, rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|source| KapiError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| KapiError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_history(path: &Path, names: &[String], history: &BoHistory) -> Result<()> {
    let mut header = vec!["k".to_string()];
    header.extend(names.iter().cloned());
    header.extend(["loss", "failed", "best_so_far"].map(String::from));
    let mut best = f64::INFINITY;
    let rows = history.records.iter().enumerate().map(|(k, r)| {
        if !r.failed {
            best = best.min(r.loss);
        }
        let mut row = vec![k.to_string()];
        row.extend(r.w.iter().map(|&v| num(v)));
        row.push(num(r.loss));
        row.push(r.failed.to_string());
        row.push(num(best));
        row
    });
    write_table(path, header, rows.collect::<Vec<_>>())
}

pub fn write_kernels(path: &Path, kernels: &[KernelRow]) -> Result<()> {
    let dim = kernels.first().map_or(1, |k| k.center.len());
    let mut header = vec!["block".to_string(), "component".to_string()];
    header.extend((0..dim).map(|d| format!("center_{d}")));
    header.extend((0..dim).map(|d| format!("width_{d}")));
    header.push("coefficient".into());
    let rows = kernels.iter().map(|k| {
        let mut row = vec![k.block.to_string(), k.component.to_string()];
        row.extend(k.center.iter().chain(&k.width).map(|&v| num(v)));
        row.push(num(k.coefficient));
        row
    });
    write_table(path, header, rows)
}

pub fn write_solution(path: &Path, table: &SolutionTable) -> Result<()> {
    let mut header = table.axes.clone();
    header.push("predicted".into());
    if table.reference.is_some() {
        header.extend(["reference", "abs_error"].map(String::from));
    }
    let rows = table.points.iter().zip(&table.predicted).enumerate().map(|(i, (p, &u))| {
        let mut row: Vec<String> = p.iter().map(|&v| num(v)).collect();
        row.push(num(u));
        if let Some(r) = &table.reference {
            row.push(num(r[i]));
            row.push(num((u - r[i]).abs()));
        }
        row
    });
    write_table(path, header, rows)
}

impl ResultBundle {
    /// Writes every file of the bundle into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|source| KapiError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        write_text(&dir.join(CONFIG_FILE), &self.config.to_toml()?)?;
        let json = serde_json::to_string_pretty(&self.summary)
            .map_err(|e| KapiError::config("summary", e.to_string()))?;
        write_text(&dir.join(SUMMARY_FILE), &json)?;
        if let Some((names, history)) = &self.history {
            write_history(&dir.join(HISTORY_FILE), names, history)?;
        }
        write_kernels(&dir.join(KERNELS_FILE), &self.kernels)?;
        write_solution(&dir.join(SOLUTION_FILE), &self.solution)
    }
}
