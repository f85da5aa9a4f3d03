//! `rsnl diagnose`: misspecification, posterior predictive and MMD
//! diagnostics recomputed from a finished run directory.

use std::fs;
use std::path::{Path, PathBuf};

use rsnl::diagnostics::{mmd, posterior_predictive, Kde};
use rsnl::mcmc::read_chains_csv;
use serde::{Deserialize, Serialize};

use crate::config::{parse_config, Method};
use crate::error::CliError;
use crate::output::{
    density_table, gamma_name, misspec_table, ppc_table, quantile, write_json, write_table_file,
    DensityGrid,
};
use crate::run::{
    chain_names, misspecification, round_dir, MisspecSummary, RoundRecord, RunReport, Status,
    CHAINS_FILE, CONFIG_FILE, OBSERVED_FILE, REPORT_FILE,
};

pub const DIAGNOSTICS_DIR: &str = "diagnostics";
pub const PPC_FILE: &str = "ppc.csv";
pub const MISSPEC_FILE: &str = "misspec.csv";
pub const GAMMA_DENSITY_FILE: &str = "gamma_density.csv";
pub const DIAGNOSE_REPORT_FILE: &str = "diagnose.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub method: Method,
    pub benchmark: String,
    /// MMD between posterior predictive and observed summaries, both
    /// standardized with the first round's statistics. The first round
    /// simulates from the prior, so the scale is the same for RSNL and SNL.
    pub mmd: f64,
    pub mmd_bandwidth: f64,
    pub mmd_bandwidth_floored: bool,
    pub ppc_draws: usize,
    pub ppc_failures: usize,
    pub misspecification: Option<MisspecSummary>,
}

fn require(dir: &Path, name: &str) -> Result<PathBuf, CliError> {
    let p = dir.join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(CliError::Input(format!(
            "{} is not a complete run directory: {name} is missing",
            dir.display()
        )))
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn read_observed(path: &Path, names: &[String]) -> Result<Vec<f64>, CliError> {
    let bad = |msg: String| CliError::Input(format!("{}: {msg}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let mut values = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 2 || names.get(i).map(String::as_str) != Some(&rec[0]) {
            return Err(bad(format!("unexpected row {}", i + 2)));
        }
        values.push(rec[1].parse::<f64>().map_err(|e| bad(e.to_string()))?);
    }
    if values.len() != names.len() {
        return Err(bad(format!(
            "expected {} summaries, found {}",
            names.len(),
            values.len()
        )));
    }
    Ok(values)
}

/// Prior and KDE posterior densities of `γᵢ` on an even grid covering both.
pub fn gamma_density(
    name: &str,
    draws: &[f64],
    scale: f64,
    points: usize,
) -> rsnl::Result<DensityGrid> {
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = quantile(&sorted, 0.005).min(-4.0 * scale);
    let hi = quantile(&sorted, 0.995).max(4.0 * scale);
    let samples: Vec<Vec<f64>> = draws.iter().map(|&g| vec![g]).collect();
    let kde = Kde::new(&samples)?;
    let x: Vec<f64> = (0..points)
        .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
        .collect();
    let prior = x
        .iter()
        .map(|v| (-v.abs() / scale).exp() / (2.0 * scale))
        .collect();
    let posterior = x
        .iter()
        .map(|v| kde.log_density(&[*v]).map(f64::exp))
        .collect::<rsnl::Result<Vec<_>>>()?;
    Ok(DensityGrid {
        name: name.to_string(),
        x,
        prior,
        posterior,
    })
}

pub fn cmd_diagnose(dir: &Path) -> Result<DiagnoseReport, CliError> {
    let config_path = require(dir, CONFIG_FILE)?;
    let report_path = require(dir, REPORT_FILE)?;
    let chains_path = require(dir, CHAINS_FILE)?;
    let observed_path = require(dir, OBSERVED_FILE)?;

    let cfg = parse_config(&read_text(&config_path)?, &config_path)?;
    let report: RunReport = serde_json::from_str(&read_text(&report_path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", report_path.display())))?;
    if report.status != Status::Complete {
        return Err(CliError::Input(format!(
            "{}: run status is {:?}, not complete",
            report_path.display(),
            report.status
        )));
    }
    let sim = cfg.benchmark.simulator();
    let summary_names = sim.summary_names();
    let observed = read_observed(&observed_path, &summary_names)?;

    let (names, chains) = read_chains_csv(&chains_path)
        .map_err(|e| CliError::Input(format!("{}: {e}", chains_path.display())))?;
    if names != chain_names(sim, cfg.method) {
        return Err(CliError::Input(format!(
            "{}: columns {names:?} do not match the configured model",
            chains_path.display()
        )));
    }
    let round_path = round_dir(dir, 0).join("round.json");
    if !round_path.is_file() {
        return Err(CliError::Input(format!(
            "{} is not a complete run directory: {} is missing",
            dir.display(),
            round_path.display()
        )));
    }
    let round: RoundRecord = serde_json::from_str(&read_text(&round_path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", round_path.display())))?;

    let p = sim.param_dim();
    let d = sim.summary_dim();
    let draws = chains.flatten();
    let theta: Vec<Vec<f64>> = draws.iter().map(|x| x[..p].to_vec()).collect();

    let out = dir.join(DIAGNOSTICS_DIR);
    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;

    let n = cfg.diagnose.ppc_draws.min(theta.len());
    let ppc = posterior_predictive(&theta, sim, n, cfg.seed)?;
    let (h, b) = ppc_table(&summary_names, &ppc.summaries);
    write_table_file(&out.join(PPC_FILE), &h, &b)?;
    let stats = &round.standardization;
    let standardized = ppc
        .summaries
        .iter()
        .map(|s| stats.summary(s))
        .collect::<rsnl::Result<Vec<_>>>()?;
    let m = mmd(&standardized, &stats.summary(&observed)?)?;

    let mut misspec = None;
    if cfg.method == Method::Rsnl {
        let scales = report.adjustment_scales.clone().ok_or_else(|| {
            CliError::Input(format!(
                "{}: adjustment scales missing",
                report_path.display()
            ))
        })?;
        let gamma: Vec<Vec<f64>> = draws.iter().map(|x| x[p..p + d].to_vec()).collect();
        if let Some(r) = misspecification(&gamma, &scales, cfg.diagnose.threshold, cfg.seed)? {
            let (h, b) = misspec_table(&summary_names, &r.distances, &r.flagged);
            write_table_file(&out.join(MISSPEC_FILE), &h, &b)?;
            misspec = Some(MisspecSummary::new(&r, &summary_names));
        }
        let grids = (0..d)
            .map(|i| {
                let g: Vec<f64> = gamma.iter().map(|x| x[i]).collect();
                gamma_density(&gamma_name(i), &g, scales[i], cfg.diagnose.grid_points)
            })
            .collect::<rsnl::Result<Vec<_>>>()?;
        let (h, b) = density_table(&grids);
        write_table_file(&out.join(GAMMA_DENSITY_FILE), &h, &b)?;
    }

    let diag = DiagnoseReport {
        method: cfg.method,
        benchmark: sim.name().to_string(),
        mmd: m.value,
        mmd_bandwidth: m.bandwidth,
        mmd_bandwidth_floored: m.floored,
        ppc_draws: ppc.summaries.len(),
        ppc_failures: ppc.failures,
        misspecification: misspec,
    };
    write_json(&out.join(DIAGNOSE_REPORT_FILE), &diag)?;
    Ok(diag)
}
