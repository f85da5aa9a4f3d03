use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rsnl_cli::config::load_config;
use rsnl_cli::coverage::cmd_coverage;
use rsnl_cli::diagnose::cmd_diagnose;
use rsnl_cli::run::cmd_run;
use rsnl_cli::{init_workers, CliError};

/// Robust sequential neural likelihood experiments.
///
/// The worker-pool size is read from RSNL_WORKERS (default: all cores).
#[derive(Parser)]
#[command(name = "rsnl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run inference for one config and write a run directory.
    Run {
        config: PathBuf,
        /// Overrides `output` from the config.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Estimate HDR coverage over replicated observed datasets.
    Coverage {
        config: PathBuf,
        /// Number of replicates (at least 10).
        #[arg(long = "c", value_name = "N")]
        c: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Recompute diagnostics for a finished run directory.
    Diagnose { dir: PathBuf },
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

fn execute(cli: Cli) -> Result<(), CliError> {
    init_workers()?;
    match cli.command {
        Command::Run { config, output } => {
            let loaded = load_config(&config)?;
            let (dir, report) = cmd_run(&loaded, output.as_deref())?;
            println!("run directory: {}", dir.display());
            for (m, r) in report.posterior.iter().zip(&report.rhat) {
                println!(
                    "{}: mean {:.4}, sd {:.4}, 90% interval [{:.4}, {:.4}], R-hat {}",
                    m.name,
                    m.mean,
                    m.sd,
                    m.q05,
                    m.q95,
                    fmt_opt(*r)
                );
            }
            if let Some(ms) = &report.misspecification {
                println!("flagged adjustment parameters: {:?}", ms.flagged_gammas);
            }
            for w in &report.warnings {
                println!("warning: {w}");
            }
        }
        Command::Coverage { config, c, output } => {
            let loaded = load_config(&config)?;
            let (dir, s) = cmd_coverage(&loaded, c, output.as_deref())?;
            println!("coverage directory: {}", dir.display());
            println!("{} of {} replicates completed", s.completed, s.requested);
            for (l, v) in s.levels.iter().zip(&s.coverage) {
                println!("level {l}: coverage {v:.3}");
            }
        }
        Command::Diagnose { dir } => {
            let d = cmd_diagnose(&dir)?;
            println!("MMD {:.6} (bandwidth {:.4})", d.mmd, d.mmd_bandwidth);
            println!(
                "posterior predictive: {} draws, {} failures",
                d.ppc_draws, d.ppc_failures
            );
            if let Some(ms) = &d.misspecification {
                println!("flagged adjustment parameters: {:?}", ms.flagged_gammas);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
