//! Laplace prior on the adjustment parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest data-driven scale.
pub const LAMBDA_FLOOR: f64 = 0.01;
pub const DEFAULT_TAU: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum AdjustmentMode {
    /// `λᵢ = max(|τ S̃ᵢ(y)|, LAMBDA_FLOOR)` from the first round on.
    DataDriven {
        tau: f64,
    },
    Fixed {
        scale: f64,
    },
}

impl Default for AdjustmentMode {
    fn default() -> Self {
        AdjustmentMode::DataDriven { tau: DEFAULT_TAU }
    }
}

impl AdjustmentMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AdjustmentMode::DataDriven { tau } if tau > 0.0 && tau.is_finite() => Ok(()),
            AdjustmentMode::Fixed { scale } if scale > 0.0 && scale.is_finite() => Ok(()),
            other => Err(Error::Invalid(format!(
                "adjustment prior {other:?} needs a positive parameter"
            ))),
        }
    }
}

/// Independent `Laplace(0, λᵢ)` per summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentPrior {
    pub scales: Vec<f64>,
}

impl AdjustmentPrior {
    pub fn dim(&self) -> usize {
        self.scales.len()
    }

    /// Log density and gradient; the gradient at `γ = 0` is taken as 0.
    pub fn log_density_grad(&self, gamma: &[f64]) -> (f64, Vec<f64>) {
        let mut lp = 0.0;
        let grad = gamma
            .iter()
            .zip(&self.scales)
            .map(|(&g, &l)| {
                lp += -(2.0 * l).ln() - g.abs() / l;
                -g.signum() * f64::from(g != 0.0) / l
            })
            .collect();
        (lp, grad)
    }

    pub fn cdf(&self, i: usize, x: f64) -> f64 {
        let l = self.scales[i];
        if x < 0.0 {
            0.5 * (x / l).exp()
        } else {
            1.0 - 0.5 * (-x / l).exp()
        }
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.scales
            .iter()
            .map(|&l| {
                let u: f64 = rng.random::<f64>() - 0.5;
                -l * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            })
            .collect()
    }
}

/// Prior used for the MCMC of round `round` given the standardized observed summary.
pub fn update_adjustment_prior(
    observed_std: &[f64],
    mode: AdjustmentMode,
    round: usize,
) -> Result<AdjustmentPrior> {
    mode.validate()?;
    let scales = match mode {
        AdjustmentMode::DataDriven { .. } if round == 0 => vec![1.0; observed_std.len()],
        AdjustmentMode::DataDriven { tau } => observed_std
            .iter()
            .map(|s| (tau * s).abs().max(LAMBDA_FLOOR))
            .collect(),
        AdjustmentMode::Fixed { scale } => vec![scale; observed_std.len()],
    };
    Ok(AdjustmentPrior { scales })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn data_driven_scales() {
        let p = update_adjustment_prior(&[0.0, 4.0], AdjustmentMode::default(), 1).unwrap();
        assert_eq!(p.scales[0], LAMBDA_FLOOR);
        assert!((p.scales[1] - 1.2).abs() < 1e-12);
        let p = update_adjustment_prior(&[0.0, 4.0], AdjustmentMode::default(), 0).unwrap();
        assert_eq!(p.scales, vec![1.0, 1.0]);
        let p =
            update_adjustment_prior(&[0.0, 4.0], AdjustmentMode::Fixed { scale: 0.5 }, 3).unwrap();
        assert_eq!(p.scales, vec![0.5, 0.5]);
        assert!(
            update_adjustment_prior(&[1.0], AdjustmentMode::DataDriven { tau: 0.0 }, 1).is_err()
        );
    }

    #[test]
    fn density_at_mode() {
        let p = AdjustmentPrior {
            scales: vec![1.0, 0.5],
        };
        let (lp, g) = p.log_density_grad(&[0.0, 0.0]);
        assert!((lp + 2f64.ln()).abs() < 1e-15);
        assert_eq!(g, vec![0.0, 0.0]);
        let (_, g) = p.log_density_grad(&[-1.0, 2.0]);
        assert_eq!(g, vec![1.0, -2.0]);
    }

    #[test]
    fn sampler_matches_cdf() {
        let p = AdjustmentPrior { scales: vec![0.7] };
        let mut rng = substream(4, &[]);
        let n = 20_000;
        let below = (0..n).filter(|_| p.sample(&mut rng)[0] < 0.5).count() as f64 / n as f64;
        assert!((below - p.cdf(0, 0.5)).abs() < 0.01);
    }
}
