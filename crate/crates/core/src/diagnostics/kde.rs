//! Product-Gaussian kernel density estimate with Silverman bandwidths.

use crate::error::{shape_check, Error, Result};

pub const MIN_KDE_SAMPLES: usize = 50;
/// Bandwidth used for a sample dimension with zero spread.
pub const BANDWIDTH_FLOOR: f64 = 1e-8;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq)]
pub struct Kde {
    samples: Vec<Vec<f64>>,
    bandwidth: Vec<f64>,
    /// Dimensions whose bandwidth was floored.
    pub floored: Vec<usize>,
    log_norm: f64,
}

impl Kde {
    /// Per dimension `h = σ (4 / ((d + 2) n))^{1/(d+4)}`.
    pub fn new(samples: &[Vec<f64>]) -> Result<Self> {
        if samples.len() < MIN_KDE_SAMPLES {
            return Err(Error::Invalid(format!(
                "KDE needs at least {MIN_KDE_SAMPLES} samples, got {}",
                samples.len()
            )));
        }
        let d = samples[0].len();
        if d == 0 || samples.iter().any(|s| s.len() != d) {
            return Err(Error::Shape(
                "KDE samples must share a positive dimension".into(),
            ));
        }
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("KDE samples must be finite".into()));
        }
        let n = samples.len() as f64;
        let factor = (4.0 / ((d as f64 + 2.0) * n)).powf(1.0 / (d as f64 + 4.0));
        let mut floored = Vec::new();
        let bandwidth: Vec<f64> = (0..d)
            .map(|j| {
                let m = samples.iter().map(|s| s[j]).sum::<f64>() / n;
                let sd =
                    (samples.iter().map(|s| (s[j] - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
                let h = sd * factor;
                if h < BANDWIDTH_FLOOR {
                    floored.push(j);
                    BANDWIDTH_FLOOR
                } else {
                    h
                }
            })
            .collect();
        if !floored.is_empty() {
            log::warn!("KDE dimensions {floored:?} have no spread; bandwidth floored at {BANDWIDTH_FLOOR:e}");
        }
        let log_norm = -n.ln() - bandwidth.iter().map(|h| h.ln() + LN_SQRT_2PI).sum::<f64>();
        Ok(Self {
            samples: samples.to_vec(),
            bandwidth,
            floored,
            log_norm,
        })
    }

    pub fn dim(&self) -> usize {
        self.bandwidth.len()
    }

    pub fn bandwidth(&self) -> &[f64] {
        &self.bandwidth
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn log_density(&self, point: &[f64]) -> Result<f64> {
        shape_check("KDE point dimension", self.dim(), point.len())?;
        let exps: Vec<f64> = self
            .samples
            .iter()
            .map(|s| {
                -0.5 * s
                    .iter()
                    .zip(point)
                    .zip(&self.bandwidth)
                    .map(|((a, b), h)| ((a - b) / h).powi(2))
                    .sum::<f64>()
            })
            .collect();
        let max = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = exps.iter().map(|e| (e - max).exp()).sum();
        Ok(max + sum.ln() + self.log_norm)
    }
}

pub fn kde_log_density(samples: &[Vec<f64>], point: &[f64]) -> Result<f64> {
    Kde::new(samples)?.log_density(point)
}
