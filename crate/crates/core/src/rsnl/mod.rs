//! The sequential loop: simulate, standardize, train the flow, refresh the
//! adjustment prior, sample the joint posterior, repeat.
//!
//! Plain SNL is the same loop without adjustment parameters.

mod adjustment;
mod data;
mod target;

pub use adjustment::{
    update_adjustment_prior, AdjustmentMode, AdjustmentPrior, DEFAULT_TAU, LAMBDA_FLOOR,
};
pub use data::{standardize, StandardizationStats, Standardized, TrainingSet, STD_FLOOR};
pub use target::JointTarget;

use std::time::Instant;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{shape_check, Error, Result};
use crate::flow::{train_flow, Flow, FlowConfig, TrainConfig, TrainReport};
use crate::mcmc::{effective_sample_size, nuts_run, rank_normalized_rhat, ChainSet, McmcConfig};
use crate::prior::PriorSpec;
use crate::rng::{derive_seed, substream, tag};
use crate::simulators::Simulator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RsnlConfig {
    pub rounds: usize,
    /// Simulations per round. Later rounds take them from the thinned
    /// posterior draws of the previous round, so the MCMC must keep at
    /// least this many after thinning.
    pub sims_per_round: usize,
    pub adjustment: AdjustmentMode,
    pub flow: FlowConfig,
    /// `seed` is replaced by a per-round seed derived from the run seed.
    pub train: TrainConfig,
    /// `seed` is replaced as for `train`; sampling keeps every draw and
    /// `thin` applies only to picking the next round's parameters.
    pub mcmc: McmcConfig,
    /// Failed simulations are redrawn with fresh parameters at most this often.
    pub max_retries: usize,
    /// Rounds whose R̂ reaches this are reported with a warning.
    pub rhat_threshold: f64,
    pub seed: u64,
}

impl Default for RsnlConfig {
    fn default() -> Self {
        Self {
            rounds: 10,
            sims_per_round: 1000,
            adjustment: AdjustmentMode::default(),
            flow: FlowConfig::default(),
            train: TrainConfig::default(),
            mcmc: McmcConfig::default(),
            max_retries: 100,
            rhat_threshold: 1.05,
            seed: 0,
        }
    }
}

impl RsnlConfig {
    /// Number of thinned draws available as next-round proposals.
    pub fn proposals_available(&self) -> usize {
        self.mcmc.chains * (self.mcmc.iterations - self.mcmc.burn_in.min(self.mcmc.iterations))
            / self.mcmc.thin.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Invalid("rounds must be at least 1".into()));
        }
        if self.sims_per_round < 20 {
            return Err(Error::Invalid(format!(
                "sims_per_round must be at least 20, got {}",
                self.sims_per_round
            )));
        }
        self.adjustment.validate()?;
        self.train.validate()?;
        self.mcmc.validate()?;
        self.flow.validate()?;
        if self.rounds > 1 && self.proposals_available() < self.sims_per_round {
            return Err(Error::Invalid(format!(
                "MCMC keeps {} thinned draws but {} simulations per round are needed",
                self.proposals_available(),
                self.sims_per_round
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundArtifacts {
    pub round: usize,
    pub flow: Flow,
    pub stats: StandardizationStats,
    pub observed_standardized: Vec<f64>,
    /// `None` for SNL.
    pub adjustment: Option<AdjustmentPrior>,
    /// Joint draws `(θ, Γ)` (θ only for SNL), unthinned.
    pub chains: ChainSet,
    pub train_report: TrainReport,
    pub rhat: Vec<Option<f64>>,
    pub ess: Vec<Option<f64>>,
    pub simulations: usize,
    pub retries: usize,
    pub warnings: Vec<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub robust: bool,
    pub param_dim: usize,
    pub summary_dim: usize,
    pub observed: Vec<f64>,
    pub rounds: Vec<RoundArtifacts>,
    pub training: TrainingSet,
    /// Simulator calls, retries included.
    pub simulations: usize,
    pub retries: usize,
}

impl RunArtifacts {
    pub fn final_round(&self) -> &RoundArtifacts {
        self.rounds.last().expect("at least one round")
    }

    pub fn final_chains(&self) -> &ChainSet {
        &self.final_round().chains
    }

    pub fn theta_chains(&self) -> ChainSet {
        self.final_chains().select_dims(0..self.param_dim)
    }

    /// `None` for SNL.
    pub fn gamma_chains(&self) -> Option<ChainSet> {
        self.robust.then(|| {
            self.final_chains()
                .select_dims(self.param_dim..self.param_dim + self.summary_dim)
        })
    }

    pub fn theta_samples(&self) -> Vec<Vec<f64>> {
        self.theta_chains().flatten()
    }

    pub fn gamma_samples(&self) -> Option<Vec<Vec<f64>>> {
        self.gamma_chains().map(|c| c.flatten())
    }
}

/// Robust SNL.
pub fn run_rsnl(sim: &dyn Simulator, observed: &[f64], cfg: &RsnlConfig) -> Result<RunArtifacts> {
    run_with(sim, observed, cfg, true, &mut |_| Ok(()))
}

/// Plain SNL: the same loop with the adjustment parameters pinned at zero.
pub fn run_snl(sim: &dyn Simulator, observed: &[f64], cfg: &RsnlConfig) -> Result<RunArtifacts> {
    run_with(sim, observed, cfg, false, &mut |_| Ok(()))
}

/// Every `thin`-th of the pooled draws (chain after chain), then `m` of
/// those spread evenly.
fn next_proposals(draws: &[Vec<f64>], thin: usize, m: usize) -> Vec<Vec<f64>> {
    let kept: Vec<&Vec<f64>> = draws.iter().step_by(thin).collect();
    (0..m).map(|i| kept[i * kept.len() / m].clone()).collect()
}

struct Simulated {
    theta: Vec<f64>,
    summary: Vec<f64>,
    retries: usize,
}

fn simulate_one(
    sim: &dyn Simulator,
    prior: &PriorSpec,
    theta: &[f64],
    fallback: &[Vec<f64>],
    cfg: &RsnlConfig,
    round: usize,
    index: usize,
) -> Result<Simulated> {
    let mut theta = theta.to_vec();
    for attempt in 0..=cfg.max_retries {
        if attempt > 0 {
            let mut rng = substream(
                cfg.seed,
                &[tag::RETRY, round as u64, index as u64, attempt as u64],
            );
            theta = if fallback.is_empty() {
                prior.sample(&mut rng)
            } else {
                fallback[rng.random_range(0..fallback.len())].clone()
            };
        }
        let mut rng = substream(
            cfg.seed,
            &[tag::SIMULATE, round as u64, index as u64, attempt as u64],
        );
        match sim.simulate(&theta, &mut rng) {
            Ok(s) if s.len() == sim.summary_dim() && s.iter().all(|v| v.is_finite()) => {
                return Ok(Simulated {
                    theta,
                    summary: s,
                    retries: attempt,
                })
            }
            Ok(s) if s.len() != sim.summary_dim() => {
                return Err(Error::Shape(format!(
                    "simulator returned {} summaries, expected {}",
                    s.len(),
                    sim.summary_dim()
                )))
            }
            Ok(_) => {
                log::debug!("round {round}, simulation {index}: non-finite summaries at {theta:?}")
            }
            Err(e) => log::debug!("round {round}, simulation {index}: {e}"),
        }
    }
    Err(Error::Simulation(format!(
        "round {round}, simulation {index}: no valid summaries after {} retries",
        cfg.max_retries
    )))
}

/// The loop behind [`run_rsnl`] and [`run_snl`]. `on_round` sees each round
/// as soon as it completes; an error from it stops the run.
pub fn run_with(
    sim: &dyn Simulator,
    observed: &[f64],
    cfg: &RsnlConfig,
    robust: bool,
    on_round: &mut dyn FnMut(&RoundArtifacts) -> Result<()>,
) -> Result<RunArtifacts> {
    cfg.validate()?;
    let prior = sim.prior();
    let p = prior.dim();
    let d = sim.summary_dim();
    shape_check("observed summary length", d, observed.len())?;
    if observed.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("observed summaries must be finite".into()));
    }
    let m = cfg.sims_per_round;

    let mut training = TrainingSet::new();
    let mut rounds: Vec<RoundArtifacts> = Vec::with_capacity(cfg.rounds);
    let mut proposals: Vec<Vec<f64>> = (0..m)
        .map(|i| prior.sample(&mut substream(cfg.seed, &[tag::PRIOR, i as u64])))
        .collect();
    let mut previous: Vec<Vec<f64>> = Vec::new();
    let (mut simulations, mut retries) = (0, 0);

    for r in 0..cfg.rounds {
        let start = Instant::now();
        let sims = proposals
            .par_iter()
            .enumerate()
            .map(|(i, theta)| simulate_one(sim, &prior, theta, &previous, cfg, r, i))
            .collect::<Result<Vec<_>>>()?;
        let round_retries: usize = sims.iter().map(|s| s.retries).sum();
        for s in sims {
            training.push(s.theta, s.summary, r)?;
        }
        simulations += m + round_retries;
        retries += round_retries;

        let st = standardize(&training, observed)?;
        let train_cfg = TrainConfig {
            seed: derive_seed(cfg.seed, &[tag::TRAIN, r as u64]),
            ..cfg.train.clone()
        };
        let (flow, train_report) = train_flow(&st.summaries, &st.context, &train_cfg, &cfg.flow)?;
        let adjustment = robust
            .then(|| update_adjustment_prior(&st.observed, cfg.adjustment, r))
            .transpose()?;
        let target = JointTarget::new(
            &flow,
            &st.stats,
            &prior,
            adjustment.as_ref(),
            st.observed.clone(),
        )?;

        let pool = if previous.is_empty() {
            &proposals
        } else {
            &previous
        };
        let mut init_rng = substream(cfg.seed, &[tag::INIT, r as u64]);
        let inits: Vec<Vec<f64>> = (0..cfg.mcmc.chains)
            .map(|_| {
                let mut x = pool[init_rng.random_range(0..pool.len())].clone();
                if robust {
                    x.extend(std::iter::repeat_n(0.0, d));
                }
                x
            })
            .collect();
        let mcmc_cfg = McmcConfig {
            thin: 1,
            seed: derive_seed(cfg.seed, &[tag::MCMC, r as u64]),
            ..cfg.mcmc.clone()
        };
        let chains = nuts_run(&target, &inits, &mcmc_cfg)?;
        let rhat = rank_normalized_rhat(&chains);
        let ess = effective_sample_size(&chains);
        let mut warnings = Vec::new();
        for (j, v) in rhat.iter().enumerate() {
            match v {
                Some(v) if *v < cfg.rhat_threshold => {}
                Some(v) => warnings.push(format!(
                    "R-hat {v:.4} for coordinate {j} is not below {}",
                    cfg.rhat_threshold
                )),
                None => warnings.push(format!("R-hat undefined for coordinate {j}")),
            }
        }
        for w in &warnings {
            log::warn!("round {r}: {w}");
        }

        previous = chains
            .flatten()
            .into_iter()
            .map(|mut x| {
                x.truncate(p);
                x
            })
            .collect();
        if r + 1 < cfg.rounds {
            proposals = next_proposals(&previous, cfg.mcmc.thin, m);
        }
        let seconds = start.elapsed().as_secs_f64();
        log::info!(
            "round {r}: {} pairs, flow epochs {}, best validation loss {:.4}, divergences {}, {seconds:.1}s",
            training.len(),
            train_report.epochs_run,
            train_report.best_validation_loss,
            chains.total_divergences()
        );
        rounds.push(RoundArtifacts {
            round: r,
            flow,
            stats: st.stats,
            observed_standardized: st.observed,
            adjustment,
            chains,
            train_report,
            rhat,
            ess,
            simulations: m + round_retries,
            retries: round_retries,
            warnings,
            seconds,
        });
        on_round(rounds.last().expect("pushed"))?;
    }

    Ok(RunArtifacts {
        robust,
        param_dim: p,
        summary_dim: d,
        observed: observed.to_vec(),
        rounds,
        training,
        simulations,
        retries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proposals_are_thinned_and_spread() {
        let draws: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let p = next_proposals(&draws, 10, 10);
        assert_eq!(
            p.iter().map(|v| v[0]).collect::<Vec<_>>(),
            (0..10).map(|i| 10.0 * i as f64).collect::<Vec<_>>()
        );
        let p = next_proposals(&draws, 10, 5);
        assert_eq!(
            p.iter().map(|v| v[0]).collect::<Vec<_>>(),
            vec![0.0, 20.0, 40.0, 60.0, 80.0]
        );
    }

    #[test]
    fn config_validation() {
        assert!(RsnlConfig::default().validate().is_ok());
        assert_eq!(RsnlConfig::default().proposals_available(), 1000);
        assert!(RsnlConfig {
            sims_per_round: 10,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(RsnlConfig {
            sims_per_round: 2000,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(RsnlConfig {
            rounds: 1,
            sims_per_round: 2000,
            ..Default::default()
        }
        .validate()
        .is_ok());
    }
}
