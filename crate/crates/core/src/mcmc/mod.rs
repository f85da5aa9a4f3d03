//! NUTS over unconstrained space, chain containers and convergence diagnostics.

mod chains_csv;
mod diagnostics;
mod nuts;
mod transform;

pub use chains_csv::{parse_chains_csv, read_chains_csv, write_chains_csv};
pub use diagnostics::{effective_sample_size, ess_basic, rank_normalized_rhat, split_rhat};
pub use nuts::DualAveraging;
pub use transform::{Support, SupportTransform, Unconstrain};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;

/// A log-density on a constrained space, differentiable in its interior.
pub trait TargetDensity: Sync {
    fn dim(&self) -> usize;

    /// Log density (up to a constant) and its gradient at a constrained point.
    fn log_density_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;

    fn support(&self) -> &SupportTransform;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcConfig {
    pub chains: usize,
    /// Per chain, warm-up included.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    /// Post-warm-up divergences above this fraction fail the run.
    pub max_divergence_fraction: f64,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            iterations: 3500,
            burn_in: 1000,
            thin: 10,
            target_accept: 0.8,
            max_tree_depth: 10,
            max_divergence_fraction: 0.1,
            seed: 0,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::Invalid("chains must be at least 1".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Invalid(format!(
                "burn_in ({}) must be below iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::Invalid("thin must be at least 1".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Invalid(format!(
                "target_accept must lie in (0, 1), got {}",
                self.target_accept
            )));
        }
        if self.max_tree_depth == 0 {
            return Err(Error::Invalid("max_tree_depth must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.max_divergence_fraction) {
            return Err(Error::Invalid(
                "max_divergence_fraction must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Post-warm-up draws, `draws[chain][iteration][dim]`, in constrained space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSet {
    pub draws: Vec<Vec<Vec<f64>>>,
    pub accept_stat: Vec<f64>,
    pub divergences: Vec<usize>,
    pub transitions: Vec<usize>,
    pub step_size: Vec<f64>,
    pub mean_tree_depth: Vec<f64>,
}

impl ChainSet {
    /// Wrap raw draws (e.g. read back from CSV) without sampler statistics.
    pub fn from_draws(draws: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let dim = draws.first().and_then(|c| c.first()).map_or(0, Vec::len);
        let len = draws.first().map_or(0, Vec::len);
        for c in &draws {
            if c.len() != len || c.iter().any(|d| d.len() != dim) {
                return Err(Error::Shape(
                    "chains must have equal length and dimension".into(),
                ));
            }
        }
        let n = draws.len();
        Ok(Self {
            draws,
            accept_stat: vec![f64::NAN; n],
            divergences: vec![0; n],
            transitions: vec![len; n],
            step_size: vec![f64::NAN; n],
            mean_tree_depth: vec![f64::NAN; n],
        })
    }

    pub fn num_chains(&self) -> usize {
        self.draws.len()
    }

    pub fn num_draws(&self) -> usize {
        self.draws.first().map_or(0, Vec::len)
    }

    pub fn dim(&self) -> usize {
        self.draws
            .first()
            .and_then(|c| c.first())
            .map_or(0, Vec::len)
    }

    /// `column(j)[chain][iteration]`.
    pub fn column(&self, j: usize) -> Vec<Vec<f64>> {
        self.draws
            .iter()
            .map(|c| c.iter().map(|d| d[j]).collect())
            .collect()
    }

    /// All draws, chain after chain.
    pub fn flatten(&self) -> Vec<Vec<f64>> {
        self.draws.iter().flatten().cloned().collect()
    }

    pub fn total_divergences(&self) -> usize {
        self.divergences.iter().sum()
    }

    /// Keep coordinates `range` of every draw.
    pub fn select_dims(&self, range: std::ops::Range<usize>) -> ChainSet {
        let mut out = self.clone();
        out.draws = self
            .draws
            .iter()
            .map(|c| c.iter().map(|d| d[range.clone()].to_vec()).collect())
            .collect();
        out
    }
}

/// Run `cfg.chains` independent NUTS chains in parallel, one initial point each.
pub fn nuts_run<T: TargetDensity + ?Sized>(
    target: &T,
    inits: &[Vec<f64>],
    cfg: &McmcConfig,
) -> Result<ChainSet> {
    cfg.validate()?;
    if inits.len() != cfg.chains {
        return Err(Error::Shape(format!(
            "{} initial points for {} chains",
            inits.len(),
            cfg.chains
        )));
    }
    if target.support().dim() != target.dim() {
        return Err(Error::Shape("support and target dimensions differ".into()));
    }
    for init in inits {
        if init.len() != target.dim() {
            return Err(Error::Shape(format!(
                "initial point of length {} for dimension {}",
                init.len(),
                target.dim()
            )));
        }
        if !target.support().contains(init) {
            return Err(Error::Domain(format!(
                "initial point {init:?} is outside the support"
            )));
        }
    }
    let runs = (0..cfg.chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(cfg.seed, &[c as u64]);
            nuts::run_chain(target, &inits[c], cfg, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;

    let transitions: usize = runs.iter().map(|r| r.transitions).sum();
    let divergences: usize = runs.iter().map(|r| r.divergences).sum();
    if divergences as f64 > cfg.max_divergence_fraction * transitions as f64 {
        return Err(Error::Sampler(format!(
            "{divergences} of {transitions} post-warm-up transitions diverged"
        )));
    }
    for (c, r) in runs.iter().enumerate() {
        log::debug!(
            "chain {c}: step size {:.3e}, accept {:.3}, mean depth {:.2}, metric {:?}",
            r.step_size,
            r.accept_stat,
            r.mean_depth,
            r.inv_metric
        );
    }
    Ok(ChainSet {
        accept_stat: runs.iter().map(|r| r.accept_stat).collect(),
        divergences: runs.iter().map(|r| r.divergences).collect(),
        transitions: runs.iter().map(|r| r.transitions).collect(),
        step_size: runs.iter().map(|r| r.step_size).collect(),
        mean_tree_depth: runs.iter().map(|r| r.mean_depth).collect(),
        draws: runs.into_iter().map(|r| r.draws).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct StdNormal {
        support: SupportTransform,
    }

    impl TargetDensity for StdNormal {
        fn dim(&self) -> usize {
            self.support.dim()
        }
        fn log_density_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
            Ok((
                -0.5 * x.iter().map(|v| v * v).sum::<f64>(),
                x.iter().map(|v| -v).collect(),
            ))
        }
        fn support(&self) -> &SupportTransform {
            &self.support
        }
    }

    #[test]
    fn config_validation() {
        assert!(McmcConfig::default().validate().is_ok());
        assert!(McmcConfig {
            thin: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(McmcConfig {
            burn_in: 3500,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn rejects_bad_inits() {
        let t = StdNormal {
            support: SupportTransform::identity(2),
        };
        let cfg = McmcConfig {
            chains: 2,
            iterations: 20,
            burn_in: 10,
            ..Default::default()
        };
        assert!(matches!(
            nuts_run(&t, &[vec![0.0, 0.0]], &cfg),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            nuts_run(&t, &[vec![0.0], vec![0.0]], &cfg),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn shapes_and_thinning() {
        let t = StdNormal {
            support: SupportTransform::identity(3),
        };
        let cfg = McmcConfig {
            chains: 2,
            iterations: 150,
            burn_in: 50,
            thin: 10,
            ..Default::default()
        };
        let cs = nuts_run(&t, &[vec![0.0; 3], vec![1.0; 3]], &cfg).unwrap();
        assert_eq!(cs.num_chains(), 2);
        assert_eq!(cs.num_draws(), 10);
        assert_eq!(cs.dim(), 3);
        assert_eq!(cs.transitions, vec![100, 100]);
    }
}
