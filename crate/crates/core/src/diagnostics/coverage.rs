//! Empirical coverage of HDR credible sets over observed replicates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hdr::Hdr;
use crate::error::{shape_check, Error, Result};

pub const MIN_REPLICATES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    /// Credibility levels `1 − α`, ascending.
    pub levels: Vec<f64>,
    /// Fraction of replicates whose HDR at each level contains θ₀.
    pub coverage: Vec<f64>,
    /// `membership[replicate][level]`.
    pub membership: Vec<Vec<bool>>,
    /// KDE log posterior density at θ₀ per replicate.
    pub log_density_at_truth: Vec<f64>,
}

impl CoverageReport {
    pub fn replicates(&self) -> usize {
        self.membership.len()
    }
}

fn check_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty()
        || levels.iter().any(|l| !(*l > 0.0 && *l < 1.0))
        || levels.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::Invalid(
            "levels must be strictly increasing inside (0, 1)".into(),
        ));
    }
    Ok(())
}

/// HDR membership of θ₀ at each level for one replicate, and the KDE log
/// density at θ₀.
pub fn replicate_membership(
    samples: &[Vec<f64>],
    theta0: &[f64],
    levels: &[f64],
) -> Result<(Vec<bool>, f64)> {
    check_levels(levels)?;
    let hdr = Hdr::new(samples)?;
    shape_check("θ₀ dimension", hdr.kde().dim(), theta0.len())?;
    let lp = hdr.kde().log_density(theta0)?;
    let inside = levels
        .iter()
        .map(|l| Ok(lp >= hdr.threshold(1.0 - l)?))
        .collect::<Result<Vec<_>>>()?;
    Ok((inside, lp))
}

impl CoverageReport {
    /// Assemble from per-replicate `(membership, log density)` rows.
    pub fn from_rows(levels: &[f64], rows: Vec<(Vec<bool>, f64)>) -> Result<Self> {
        check_levels(levels)?;
        if rows.is_empty() {
            return Err(Error::Invalid("no replicates".into()));
        }
        for r in &rows {
            shape_check("membership row", levels.len(), r.0.len())?;
        }
        let c = rows.len() as f64;
        let coverage = (0..levels.len())
            .map(|k| rows.iter().filter(|r| r.0[k]).count() as f64 / c)
            .collect();
        let (membership, log_density_at_truth) = rows.into_iter().unzip();
        Ok(Self {
            levels: levels.to_vec(),
            coverage,
            membership,
            log_density_at_truth,
        })
    }
}

/// `replicates[c]` holds the posterior draws of replicate `c`.
pub fn empirical_coverage(
    replicates: &[Vec<Vec<f64>>],
    theta0: &[f64],
    levels: &[f64],
) -> Result<CoverageReport> {
    if replicates.len() < MIN_REPLICATES {
        return Err(Error::Invalid(format!(
            "coverage needs at least {MIN_REPLICATES} replicates, got {}",
            replicates.len()
        )));
    }
    check_levels(levels)?;
    let rows = replicates
        .par_iter()
        .map(|samples| replicate_membership(samples, theta0, levels))
        .collect::<Result<Vec<_>>>()?;
    CoverageReport::from_rows(levels, rows)
}
