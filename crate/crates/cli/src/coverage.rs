//! `rsnl coverage`: empirical HDR coverage over replicated observations.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use rsnl::diagnostics::{replicate_membership, CoverageReport, MIN_REPLICATES};
use rsnl::rng::{derive_seed, substream, tag};
use rsnl::simulators::Benchmark;
use serde::{Deserialize, Serialize};

use crate::config::{LoadedConfig, Method};
use crate::error::CliError;
use crate::output::{
    coverage_table, log_density_table, membership_table, write_json, write_table_file,
};
use crate::run::{infer, CONFIG_FILE};

pub const MIN_COVERAGE_REPLICATES: usize = 10;
pub const COVERAGE_FILE: &str = "coverage.csv";
pub const MEMBERSHIP_FILE: &str = "membership.csv";
pub const LOG_DENSITY_FILE: &str = "log_density.csv";
pub const COVERAGE_REPORT_FILE: &str = "coverage.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub method: Method,
    pub benchmark: String,
    pub seed: u64,
    pub theta0: Vec<f64>,
    pub requested: usize,
    pub completed: usize,
    pub failures: Vec<ReplicateFailure>,
    pub levels: Vec<f64>,
    pub coverage: Vec<f64>,
    pub seconds: f64,
}

/// Seed of replicate `c`; observed data and inference both derive from it.
pub fn replicate_seed(seed: u64, c: usize) -> u64 {
    derive_seed(seed, &[tag::REPLICATE, c as u64])
}

fn fixture_backed(b: &Benchmark) -> bool {
    match b {
        Benchmark::Ma1(s) => s.use_fixture,
        Benchmark::Slcp(s) => s.use_fixture,
        _ => false,
    }
}

/// One replicate: fresh observed data at θ₀, a full run, HDR membership.
fn replicate(loaded: &LoadedConfig, c: usize) -> rsnl::Result<(Vec<bool>, f64)> {
    let cfg = &loaded.config;
    let sim = cfg.benchmark.simulator();
    let seed = replicate_seed(cfg.seed, c);
    let observed = sim.observed(&mut substream(seed, &[tag::OBSERVED]))?;
    let rcfg = rsnl::rsnl::RsnlConfig {
        seed,
        ..cfg.coverage_config()
    };
    let run = infer(sim, &observed, &rcfg, cfg.method, &mut |_| Ok(()))?;
    replicate_membership(
        &run.theta_samples(),
        &sim.true_params(),
        &cfg.coverage.levels,
    )
}

pub fn cmd_coverage(
    loaded: &LoadedConfig,
    replicates: usize,
    output: Option<&Path>,
) -> Result<(PathBuf, CoverageSummary), CliError> {
    let cfg = &loaded.config;
    if replicates < MIN_COVERAGE_REPLICATES {
        return Err(CliError::Config(format!(
            "coverage needs at least {MIN_COVERAGE_REPLICATES} replicates, got {replicates}"
        )));
    }
    if fixture_backed(&cfg.benchmark) || cfg.observed.is_some() {
        return Err(CliError::Config(format!(
            "{}: coverage needs fresh observed data; drop `observed` and set `use_fixture = false`",
            loaded.path.display()
        )));
    }
    if replicates < MIN_REPLICATES {
        log::warn!("{replicates} replicates give a coarse coverage estimate");
    }
    let dir = output.map_or_else(|| cfg.output.clone(), Path::to_path_buf);
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let snapshot = dir.join(CONFIG_FILE);
    fs::write(&snapshot, &loaded.text).map_err(|e| CliError::io(&snapshot, e))?;

    let start = Instant::now();
    let results: Vec<(usize, rsnl::Result<(Vec<bool>, f64)>)> = (0..replicates)
        .into_par_iter()
        .map(|c| {
            let r = replicate(loaded, c);
            match &r {
                Ok(_) => log::info!("replicate {c} done"),
                Err(e) => log::error!("replicate {c} failed: {e}"),
            }
            (c, r)
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (c, r) in results {
        match r {
            Ok(row) => rows.push((c, row)),
            Err(e) => failures.push(ReplicateFailure {
                replicate: c,
                error: e.to_string(),
            }),
        }
    }
    let sim = cfg.benchmark.simulator();
    let levels = &cfg.coverage.levels;
    let mut summary = CoverageSummary {
        method: cfg.method,
        benchmark: sim.name().to_string(),
        seed: cfg.seed,
        theta0: sim.true_params(),
        requested: replicates,
        completed: rows.len(),
        failures,
        levels: levels.clone(),
        coverage: Vec::new(),
        seconds: 0.0,
    };
    if rows.is_empty() {
        summary.seconds = start.elapsed().as_secs_f64();
        write_json(&dir.join(COVERAGE_REPORT_FILE), &summary)?;
        return Err(rsnl::Error::Simulation("every coverage replicate failed".into()).into());
    }

    let membership: Vec<(usize, Vec<bool>)> = rows.iter().map(|(c, r)| (*c, r.0.clone())).collect();
    let log_density: Vec<(usize, f64)> = rows.iter().map(|(c, r)| (*c, r.1)).collect();
    let report = CoverageReport::from_rows(levels, rows.into_iter().map(|(_, r)| r).collect())?;

    let (h, b) = membership_table(levels, &membership);
    write_table_file(&dir.join(MEMBERSHIP_FILE), &h, &b)?;
    let (h, b) = log_density_table(&log_density);
    write_table_file(&dir.join(LOG_DENSITY_FILE), &h, &b)?;
    let (h, b) = coverage_table(levels, &report.coverage, report.replicates());
    write_table_file(&dir.join(COVERAGE_FILE), &h, &b)?;
    summary.coverage = report.coverage;
    summary.seconds = start.elapsed().as_secs_f64();
    write_json(&dir.join(COVERAGE_REPORT_FILE), &summary)?;
    Ok((dir, summary))
}
