//! `rsnl run`: one inference run and its run directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rsnl::diagnostics::{prior_posterior_distance, MisspecReport, MIN_POSTERIOR_DRAWS};
use rsnl::flow::write_flow;
use rsnl::mcmc::write_chains_csv;
use rsnl::rng::{substream, tag};
use rsnl::rsnl::{run_with, AdjustmentPrior, RoundArtifacts, RunArtifacts, StandardizationStats};
use rsnl::simulators::Simulator;
use serde::{Deserialize, Serialize};

use crate::config::{LoadedConfig, Method, RunConfig};
use crate::error::CliError;
use crate::output::{
    adjustment_table, gamma_name, marginal, observed_table, write_json, write_table_file, Marginal,
};

pub const CONFIG_FILE: &str = "config.toml";
pub const OBSERVED_FILE: &str = "observed.csv";
pub const CHAINS_FILE: &str = "chains.csv";
pub const ADJUSTMENT_FILE: &str = "adjustment.csv";
pub const REPORT_FILE: &str = "report.json";
pub const ROUNDS_DIR: &str = "rounds";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisspecSummary {
    pub distances: Vec<f64>,
    pub flagged: Vec<bool>,
    pub threshold: f64,
    pub flagged_gammas: Vec<String>,
    pub flagged_summaries: Vec<String>,
}

impl MisspecSummary {
    pub fn new(report: &MisspecReport, summary_names: &[String]) -> Self {
        let idx = report.flagged_indices();
        Self {
            distances: report.distances.clone(),
            flagged: report.flagged.clone(),
            threshold: report.threshold,
            flagged_gammas: idx.iter().map(|&i| gamma_name(i)).collect(),
            flagged_summaries: idx.iter().map(|&i| summary_names[i].clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub status: Status,
    pub error: Option<String>,
    pub method: Method,
    pub benchmark: String,
    pub seed: u64,
    pub parameters: Vec<String>,
    pub summaries: Vec<String>,
    pub observed: Vec<f64>,
    pub rounds_completed: usize,
    pub simulations: usize,
    pub retries: usize,
    /// Final-round θ marginals.
    pub posterior: Vec<Marginal>,
    /// Final-round R̂ and bulk ESS for every sampled coordinate.
    pub rhat: Vec<Option<f64>>,
    pub ess: Vec<Option<f64>>,
    /// Final-round Laplace scales of the adjustment prior.
    pub adjustment_scales: Option<Vec<f64>>,
    pub misspecification: Option<MisspecSummary>,
    pub warnings: Vec<String>,
    pub seconds: f64,
}

/// Per-round record stored next to the flow checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub simulations: usize,
    pub retries: usize,
    pub seconds: f64,
    pub standardization: StandardizationStats,
    pub observed_standardized: Vec<f64>,
    pub adjustment_scales: Option<Vec<f64>>,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    pub rhat: Vec<Option<f64>>,
    pub ess: Vec<Option<f64>>,
    pub divergences: Vec<usize>,
    pub step_size: Vec<f64>,
    pub accept_stat: Vec<f64>,
    pub warnings: Vec<String>,
}

impl RoundRecord {
    fn new(r: &RoundArtifacts) -> Self {
        Self {
            round: r.round,
            simulations: r.simulations,
            retries: r.retries,
            seconds: r.seconds,
            standardization: r.stats.clone(),
            observed_standardized: r.observed_standardized.clone(),
            adjustment_scales: r.adjustment.as_ref().map(|a| a.scales.clone()),
            epochs_run: r.train_report.epochs_run,
            best_epoch: r.train_report.best_epoch,
            best_validation_loss: r.train_report.best_validation_loss,
            train_loss: r.train_report.train_loss.clone(),
            validation_loss: r.train_report.validation_loss.clone(),
            rhat: r.rhat.clone(),
            ess: r.ess.clone(),
            divergences: r.chains.divergences.clone(),
            step_size: r.chains.step_size.clone(),
            accept_stat: r.chains.accept_stat.clone(),
            warnings: r.warnings.clone(),
        }
    }
}

pub fn round_dir(dir: &Path, round: usize) -> PathBuf {
    dir.join(ROUNDS_DIR).join(format!("round_{round:02}"))
}

/// Column names of the chains CSV.
pub fn chain_names(sim: &dyn Simulator, method: Method) -> Vec<String> {
    let mut names = sim.param_names();
    if method == Method::Rsnl {
        names.extend((0..sim.summary_dim()).map(gamma_name));
    }
    names
}

/// Observed summaries: the config override, else the benchmark's own.
pub fn observed_summaries(cfg: &RunConfig) -> Result<Vec<f64>, CliError> {
    match &cfg.observed {
        Some(o) => Ok(o.clone()),
        None => Ok(cfg
            .benchmark
            .simulator()
            .observed(&mut substream(cfg.seed, &[tag::OBSERVED]))?),
    }
}

/// Run RSNL or SNL on `observed`.
pub fn infer(
    sim: &dyn Simulator,
    observed: &[f64],
    cfg: &rsnl::rsnl::RsnlConfig,
    method: Method,
    on_round: &mut dyn FnMut(&RoundArtifacts) -> rsnl::Result<()>,
) -> rsnl::Result<RunArtifacts> {
    run_with(sim, observed, cfg, method == Method::Rsnl, on_round)
}

/// KS distances between the adjustment posteriors and their priors. The
/// prior reference draws come from the run seed, so the result is
/// reproducible from the run directory alone.
pub fn misspecification(
    gamma: &[Vec<f64>],
    scales: &[f64],
    threshold: f64,
    seed: u64,
) -> rsnl::Result<Option<MisspecReport>> {
    if gamma.len() < MIN_POSTERIOR_DRAWS {
        log::warn!(
            "only {} adjustment draws; misspecification check skipped",
            gamma.len()
        );
        return Ok(None);
    }
    let prior = AdjustmentPrior {
        scales: scales.to_vec(),
    };
    let mut rng = substream(seed, &[tag::DIAGNOSE]);
    prior_posterior_distance(gamma, &prior, threshold, &mut rng).map(Some)
}

fn mkdir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn base_report(cfg: &RunConfig, observed: &[f64]) -> RunReport {
    let sim = cfg.benchmark.simulator();
    RunReport {
        status: Status::Running,
        error: None,
        method: cfg.method,
        benchmark: sim.name().to_string(),
        seed: cfg.seed,
        parameters: sim.param_names(),
        summaries: sim.summary_names(),
        observed: observed.to_vec(),
        rounds_completed: 0,
        simulations: 0,
        retries: 0,
        posterior: Vec::new(),
        rhat: Vec::new(),
        ess: Vec::new(),
        adjustment_scales: None,
        misspecification: None,
        warnings: Vec::new(),
        seconds: 0.0,
    }
}

/// Execute a run and fill its directory. On failure the directory keeps the
/// config snapshot, completed rounds and a report with status `failed`.
pub fn cmd_run(
    loaded: &LoadedConfig,
    output: Option<&Path>,
) -> Result<(PathBuf, RunReport), CliError> {
    let cfg = &loaded.config;
    let dir = output.map_or_else(|| cfg.output.clone(), Path::to_path_buf);
    mkdir(&dir)?;
    let snapshot = dir.join(CONFIG_FILE);
    fs::write(&snapshot, &loaded.text).map_err(|e| CliError::io(&snapshot, e))?;

    let start = Instant::now();
    let sim = cfg.benchmark.simulator();
    let mut report = base_report(cfg, &[]);
    let report_path = dir.join(REPORT_FILE);
    let observed = match observed_summaries(cfg) {
        Ok(o) => o,
        Err(e) => {
            report.status = Status::Failed;
            report.error = Some(e.to_string());
            write_json(&report_path, &report)?;
            return Err(e);
        }
    };
    report.observed = observed.clone();
    let (h, rows) = observed_table(&sim.summary_names(), &observed);
    write_table_file(&dir.join(OBSERVED_FILE), &h, &rows)?;
    write_json(&report_path, &report)?;

    let mut rounds_done = 0;
    let mut sims_done = 0;
    let mut on_round = |r: &RoundArtifacts| -> rsnl::Result<()> {
        let rd = round_dir(&dir, r.round);
        fs::create_dir_all(&rd)?;
        write_flow(&r.flow, &rd.join("flow.bin"))?;
        let text = serde_json::to_string_pretty(&RoundRecord::new(r))
            .map_err(|e| rsnl::Error::Parse(e.to_string()))?;
        fs::write(rd.join("round.json"), text + "\n")?;
        rounds_done = r.round + 1;
        sims_done += r.simulations;
        Ok(())
    };
    let run = infer(
        sim,
        &observed,
        &cfg.rsnl_config(),
        cfg.method,
        &mut on_round,
    );
    let run = match run {
        Ok(run) => run,
        Err(e) => {
            report.status = Status::Failed;
            report.error = Some(e.to_string());
            report.rounds_completed = rounds_done;
            report.simulations = sims_done;
            report.seconds = start.elapsed().as_secs_f64();
            write_json(&report_path, &report)?;
            return Err(e.into());
        }
    };

    let last = run.final_round();
    let names = chain_names(sim, cfg.method);
    let chains_path = dir.join(CHAINS_FILE);
    let f = fs::File::create(&chains_path).map_err(|e| CliError::io(&chains_path, e))?;
    write_chains_csv(&last.chains, &names, std::io::BufWriter::new(f))?;

    let theta = run.theta_samples();
    report.posterior = sim
        .param_names()
        .iter()
        .enumerate()
        .map(|(j, n)| marginal(n, &theta.iter().map(|t| t[j]).collect::<Vec<_>>()))
        .collect();
    if let (Some(gamma), Some(adj)) = (run.gamma_samples(), &last.adjustment) {
        let post: Vec<Marginal> = (0..run.summary_dim)
            .map(|i| {
                marginal(
                    &gamma_name(i),
                    &gamma.iter().map(|g| g[i]).collect::<Vec<_>>(),
                )
            })
            .collect();
        let (h, rows) = adjustment_table(&sim.summary_names(), &adj.scales, &post);
        write_table_file(&dir.join(ADJUSTMENT_FILE), &h, &rows)?;
        report.adjustment_scales = Some(adj.scales.clone());
        report.misspecification =
            misspecification(&gamma, &adj.scales, cfg.diagnose.threshold, cfg.seed)?
                .map(|m| MisspecSummary::new(&m, &sim.summary_names()));
    }
    report.status = Status::Complete;
    report.rounds_completed = run.rounds.len();
    report.simulations = run.simulations;
    report.retries = run.retries;
    report.rhat = last.rhat.clone();
    report.ess = last.ess.clone();
    report.warnings = run
        .rounds
        .iter()
        .flat_map(|r| {
            r.warnings
                .iter()
                .map(move |w| format!("round {}: {w}", r.round))
        })
        .collect();
    report.seconds = start.elapsed().as_secs_f64();
    write_json(&report_path, &report)?;
    Ok((dir, report))
}
