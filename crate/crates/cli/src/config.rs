//! Run configuration files.
//!
//! A config is a TOML document. Top-level keys select the method, seed and
//! output directory; `[benchmark]` picks the example by `name`; the remaining
//! tables mirror the library configuration structs.

use std::path::{Path, PathBuf};

use rsnl::flow::{FlowConfig, TrainConfig};
use rsnl::mcmc::McmcConfig;
use rsnl::rsnl::{AdjustmentMode, RsnlConfig};
use rsnl::simulators::Benchmark;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rsnl,
    Snl,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Rsnl => "rsnl",
            Method::Snl => "snl",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoverageSettings {
    /// Credibility levels, strictly increasing in (0, 1).
    pub levels: Vec<f64>,
    /// Per-replicate overrides of `rounds` and `sims_per_round`.
    pub rounds: Option<usize>,
    pub sims_per_round: Option<usize>,
}

impl Default for CoverageSettings {
    fn default() -> Self {
        Self {
            levels: (1..20).map(|k| k as f64 / 20.0).collect(),
            rounds: None,
            sims_per_round: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnoseSettings {
    /// Posterior predictive simulations (also the MMD sample).
    pub ppc_draws: usize,
    /// KS distance above which an adjustment parameter is flagged.
    pub threshold: f64,
    /// Points per density grid.
    pub grid_points: usize,
}

impl Default for DiagnoseSettings {
    fn default() -> Self {
        Self {
            ppc_draws: 1000,
            threshold: rsnl::diagnostics::MISSPEC_THRESHOLD,
            grid_points: 200,
        }
    }
}

fn default_rounds() -> usize {
    RsnlConfig::default().rounds
}
fn default_sims() -> usize {
    RsnlConfig::default().sims_per_round
}
fn default_retries() -> usize {
    RsnlConfig::default().max_retries
}
fn default_rhat() -> f64 {
    RsnlConfig::default().rhat_threshold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    pub seed: u64,
    /// Run directory; relative paths resolve against the working directory.
    pub output: PathBuf,
    pub benchmark: Benchmark,
    /// Replaces the benchmark's observed summaries.
    #[serde(default)]
    pub observed: Option<Vec<f64>>,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_sims")]
    pub sims_per_round: usize,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
    #[serde(default = "default_rhat")]
    pub rhat_threshold: f64,
    #[serde(default)]
    pub adjustment: AdjustmentMode,
    #[serde(default)]
    pub flow: FlowConfig,
    /// `seed` is ignored; training seeds derive from the run seed.
    #[serde(default)]
    pub train: TrainConfig,
    /// `seed` is ignored as for `train`.
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub coverage: CoverageSettings,
    #[serde(default)]
    pub diagnose: DiagnoseSettings,
}

impl RunConfig {
    pub fn rsnl_config(&self) -> RsnlConfig {
        RsnlConfig {
            rounds: self.rounds,
            sims_per_round: self.sims_per_round,
            adjustment: self.adjustment,
            flow: self.flow.clone(),
            train: self.train.clone(),
            mcmc: self.mcmc.clone(),
            max_retries: self.max_retries,
            rhat_threshold: self.rhat_threshold,
            seed: self.seed,
        }
    }

    /// The configuration used for each coverage replicate.
    pub fn coverage_config(&self) -> RsnlConfig {
        RsnlConfig {
            rounds: self.coverage.rounds.unwrap_or(self.rounds),
            sims_per_round: self.coverage.sims_per_round.unwrap_or(self.sims_per_round),
            ..self.rsnl_config()
        }
    }
}

/// A parsed config together with its source text, kept for the snapshot.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub text: String,
    pub config: RunConfig,
}

/// 1-based line of the first assignment to `key`, searched after the
/// `[table]` header when one is given.
fn locate(text: &str, table: Option<&str>, key: &str) -> Option<usize> {
    let mut in_table = table.is_none();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            let name = t
                .trim_start_matches('[')
                .split(']')
                .next()
                .unwrap_or("")
                .trim();
            match table {
                Some(tb) => {
                    if name == tb {
                        if key.is_empty() {
                            return Some(i + 1);
                        }
                        in_table = true;
                    } else {
                        in_table = false;
                    }
                }
                None => in_table = false,
            }
            continue;
        }
        if !in_table || key.is_empty() {
            continue;
        }
        if let Some(rest) = t.strip_prefix(key) {
            if rest.trim_start().starts_with('=') {
                return Some(i + 1);
            }
        }
    }
    // inline or dotted forms such as `mcmc = { ... }` or `mcmc.chains = 4`
    let needle = match table {
        Some(tb) if key.is_empty() => tb.to_string(),
        Some(tb) => format!("{tb}.{key}"),
        None => key.to_string(),
    };
    text.lines()
        .position(|l| l.trim_start().starts_with(&needle))
        .map(|i| i + 1)
}

fn invalid(
    path: &Path,
    text: &str,
    table: Option<&str>,
    key: &str,
    msg: impl std::fmt::Display,
) -> CliError {
    let line = locate(text, table, key);
    let at = match line {
        Some(l) => format!("{}:{l}", path.display()),
        None => path.display().to_string(),
    };
    let field = match table {
        Some(t) if key.is_empty() => t.to_string(),
        Some(t) => format!("{t}.{key}"),
        None => key.to_string(),
    };
    CliError::Config(format!("{at}: `{field}`: {msg}"))
}

/// Parse and validate a config document. `path` is used in messages only.
pub fn parse_config(text: &str, path: &Path) -> Result<RunConfig, CliError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        match line {
            Some(l) => CliError::Config(format!("{}:{l}: {msg}", path.display())),
            None => CliError::Config(format!("{}: {msg}", path.display())),
        }
    })?;
    validate(&cfg, text, path)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig, text: &str, path: &Path) -> Result<(), CliError> {
    let bad =
        |table: Option<&str>, key: &str, msg: String| Err(invalid(path, text, table, key, msg));
    if cfg.rounds == 0 {
        return bad(None, "rounds", "must be at least 1".into());
    }
    if cfg.sims_per_round < 20 {
        return bad(
            None,
            "sims_per_round",
            format!("must be at least 20, got {}", cfg.sims_per_round),
        );
    }
    if !(cfg.rhat_threshold > 1.0) {
        return bad(
            None,
            "rhat_threshold",
            format!("must exceed 1, got {}", cfg.rhat_threshold),
        );
    }
    if let Err(e) = cfg.adjustment.validate() {
        return bad(Some("adjustment"), "", e.to_string());
    }
    if let Err(e) = cfg.train.validate() {
        return bad(Some("train"), "", e.to_string());
    }
    if let Err(e) = cfg.mcmc.validate() {
        return bad(Some("mcmc"), "", e.to_string());
    }
    if let Err(e) = cfg.benchmark.validate() {
        return bad(Some("benchmark"), "", e.to_string());
    }
    let sim = cfg.benchmark.simulator();
    if let Some(obs) = &cfg.observed {
        if obs.len() != sim.summary_dim() || obs.iter().any(|v| !v.is_finite()) {
            return bad(
                None,
                "observed",
                format!(
                    "expected {} finite summaries, got {}",
                    sim.summary_dim(),
                    obs.len()
                ),
            );
        }
    }
    if let Err(e) = cfg.flow.validate() {
        return bad(Some("flow"), "", e.to_string());
    }
    if let Err(e) = cfg.rsnl_config().validate() {
        return bad(None, "sims_per_round", e.to_string());
    }
    let c = &cfg.coverage;
    if c.levels.is_empty()
        || c.levels.iter().any(|l| !(*l > 0.0 && *l < 1.0))
        || c.levels.windows(2).any(|w| w[0] >= w[1])
    {
        return bad(
            Some("coverage"),
            "levels",
            "must be strictly increasing inside (0, 1)".into(),
        );
    }
    if let Err(e) = cfg.coverage_config().validate() {
        return bad(Some("coverage"), "", e.to_string());
    }
    let d = &cfg.diagnose;
    if d.ppc_draws < rsnl::diagnostics::MIN_MMD_SAMPLES {
        return bad(
            Some("diagnose"),
            "ppc_draws",
            format!("must be at least {}", rsnl::diagnostics::MIN_MMD_SAMPLES),
        );
    }
    if !(d.threshold > 0.0 && d.threshold < 1.0) {
        return bad(Some("diagnose"), "threshold", "must lie in (0, 1)".into());
    }
    if d.grid_points < 2 {
        return bad(Some("diagnose"), "grid_points", "must be at least 2".into());
    }
    Ok(())
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: cannot read config: {e}", path.display())))?;
    let config = parse_config(&text, path)?;
    Ok(LoadedConfig {
        path: path.to_path_buf(),
        text,
        config,
    })
}
