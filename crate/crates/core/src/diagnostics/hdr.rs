//! Highest-density-region membership by the plug-in density-quantile rule.

use super::kde::Kde;
use crate::error::{Error, Result};

/// KDE plus the sorted log densities at its own samples.
#[derive(Debug, Clone)]
pub struct Hdr {
    kde: Kde,
    sorted_log_density: Vec<f64>,
}

impl Hdr {
    pub fn new(samples: &[Vec<f64>]) -> Result<Self> {
        use rayon::prelude::*;
        let kde = Kde::new(samples)?;
        let mut sorted_log_density = samples
            .par_iter()
            .map(|s| kde.log_density(s))
            .collect::<Result<Vec<_>>>()?;
        sorted_log_density.sort_by(f64::total_cmp);
        Ok(Self {
            kde,
            sorted_log_density,
        })
    }

    pub fn kde(&self) -> &Kde {
        &self.kde
    }

    /// Log-density level bounding the `1 − alpha` region: the `alpha`
    /// quantile of the sample log densities.
    pub fn threshold(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Invalid(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        let v = &self.sorted_log_density;
        let h = (v.len() - 1) as f64 * alpha;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(v.len() - 1);
        Ok(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
    }

    /// Whether `point` lies in the `1 − alpha` highest density region.
    pub fn contains(&self, point: &[f64], alpha: f64) -> Result<bool> {
        Ok(self.kde.log_density(point)? >= self.threshold(alpha)?)
    }
}

pub fn hdr_contains(samples: &[Vec<f64>], point: &[f64], alpha: f64) -> Result<bool> {
    Hdr::new(samples)?.contains(point, alpha)
}
