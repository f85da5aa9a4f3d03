//! CSV and JSON artifacts. Column layouts are fixed; see the README.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CliError;

fn csv_error(path: &str, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::Io {
            path: path.to_string(),
            source: io,
        },
        other => CliError::Input(format!("{path}: {other:?}")),
    }
}

/// A header followed by rows of already formatted fields.
pub fn write_table<W: Write>(
    out: W,
    header: &[String],
    rows: &[Vec<String>],
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(|e| csv_error("csv", e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_error("csv", e))?;
    }
    w.flush().map_err(|e| CliError::Io {
        path: "csv".into(),
        source: e,
    })
}

pub fn write_table_file(
    path: &Path,
    header: &[String],
    rows: &[Vec<String>],
) -> Result<(), CliError> {
    let f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    write_table(f, header, rows)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Level labels used as column names.
pub fn level_label(level: f64) -> String {
    format!("{level}")
}

/// `summary,value`
pub fn observed_table(names: &[String], values: &[f64]) -> (Vec<String>, Vec<Vec<String>>) {
    let rows = names
        .iter()
        .zip(values)
        .map(|(n, v)| vec![n.clone(), v.to_string()])
        .collect();
    (strings(&["summary", "value"]), rows)
}

/// Marginal summary of one coordinate of the posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub median: f64,
    pub q95: f64,
}

/// Type 7 quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn marginal(name: &str, values: &[f64]) -> Marginal {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Marginal {
        name: name.to_string(),
        mean,
        sd,
        q05: quantile(&s, 0.05),
        median: quantile(&s, 0.5),
        q95: quantile(&s, 0.95),
    }
}

/// `gamma,summary,prior_scale,posterior_mean,posterior_sd,posterior_q05,posterior_median,posterior_q95`
pub fn adjustment_table(
    summary_names: &[String],
    scales: &[f64],
    posterior: &[Marginal],
) -> (Vec<String>, Vec<Vec<String>>) {
    let rows = posterior
        .iter()
        .enumerate()
        .map(|(i, m)| {
            vec![
                m.name.clone(),
                summary_names[i].clone(),
                scales[i].to_string(),
                m.mean.to_string(),
                m.sd.to_string(),
                m.q05.to_string(),
                m.median.to_string(),
                m.q95.to_string(),
            ]
        })
        .collect();
    let header = strings(&[
        "gamma",
        "summary",
        "prior_scale",
        "posterior_mean",
        "posterior_sd",
        "posterior_q05",
        "posterior_median",
        "posterior_q95",
    ]);
    (header, rows)
}

/// `gamma,summary,ks_distance,flagged`
pub fn misspec_table(
    summary_names: &[String],
    distances: &[f64],
    flagged: &[bool],
) -> (Vec<String>, Vec<Vec<String>>) {
    let rows = distances
        .iter()
        .enumerate()
        .map(|(i, d)| {
            vec![
                gamma_name(i),
                summary_names[i].clone(),
                d.to_string(),
                u8::from(flagged[i]).to_string(),
            ]
        })
        .collect();
    (
        strings(&["gamma", "summary", "ks_distance", "flagged"]),
        rows,
    )
}

/// `gamma,x,prior_density,posterior_density`, one block per adjustment parameter.
pub fn density_table(grids: &[DensityGrid]) -> (Vec<String>, Vec<Vec<String>>) {
    let rows = grids
        .iter()
        .flat_map(|g| {
            g.x.iter()
                .zip(&g.prior)
                .zip(&g.posterior)
                .map(|((x, p), q)| {
                    vec![g.name.clone(), x.to_string(), p.to_string(), q.to_string()]
                })
        })
        .collect();
    (
        strings(&["gamma", "x", "prior_density", "posterior_density"]),
        rows,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub name: String,
    pub x: Vec<f64>,
    pub prior: Vec<f64>,
    pub posterior: Vec<f64>,
}

/// `replicate,<level>...` with 1 when the HDR at that level contains θ₀.
pub fn membership_table(
    levels: &[f64],
    rows: &[(usize, Vec<bool>)],
) -> (Vec<String>, Vec<Vec<String>>) {
    let header = std::iter::once("replicate".to_string())
        .chain(levels.iter().map(|l| level_label(*l)))
        .collect();
    let body = rows
        .iter()
        .map(|(c, inside)| {
            std::iter::once(c.to_string())
                .chain(inside.iter().map(|b| u8::from(*b).to_string()))
                .collect()
        })
        .collect();
    (header, body)
}

/// `level,coverage,replicates`
pub fn coverage_table(
    levels: &[f64],
    coverage: &[f64],
    replicates: usize,
) -> (Vec<String>, Vec<Vec<String>>) {
    let rows = levels
        .iter()
        .zip(coverage)
        .map(|(l, c)| vec![level_label(*l), c.to_string(), replicates.to_string()])
        .collect();
    (strings(&["level", "coverage", "replicates"]), rows)
}

/// `replicate,log_density`
pub fn log_density_table(rows: &[(usize, f64)]) -> (Vec<String>, Vec<Vec<String>>) {
    let body = rows
        .iter()
        .map(|(c, lp)| vec![c.to_string(), lp.to_string()])
        .collect();
    (strings(&["replicate", "log_density"]), body)
}

/// Summary names as header, one row per simulated dataset.
pub fn ppc_table(summary_names: &[String], rows: &[Vec<f64>]) -> (Vec<String>, Vec<Vec<String>>) {
    let body = rows
        .iter()
        .map(|r| r.iter().map(|v| v.to_string()).collect())
        .collect();
    (summary_names.to_vec(), body)
}

/// Column name of the `i`-th (0-based) adjustment parameter.
pub fn gamma_name(i: usize) -> String {
    format!("gamma_{}", i + 1)
}
