//! Parameter priors with analytic log-densities.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{shape_check, Error, Result};
use crate::mcmc::{Support, SupportTransform};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PriorDim {
    Uniform {
        low: f64,
        high: f64,
    },
    Normal {
        mean: f64,
        sd: f64,
    },
    /// `U(θ[on], high)`, e.g. an infection rate bounded below by the recovery rate.
    ConditionalUniform {
        on: usize,
        high: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    dims: Vec<PriorDim>,
    support: SupportTransform,
}

impl PriorSpec {
    pub fn new(dims: Vec<PriorDim>) -> Result<Self> {
        let support = dims
            .iter()
            .enumerate()
            .map(|(i, d)| match *d {
                PriorDim::Uniform { low, high }
                    if low < high && low.is_finite() && high.is_finite() =>
                {
                    Ok(Support::Interval(low, high))
                }
                PriorDim::Normal { mean, sd } if mean.is_finite() && sd > 0.0 && sd.is_finite() => {
                    Ok(Support::Real)
                }
                PriorDim::ConditionalUniform { on, high } => {
                    Ok(Support::AboveOther { on, upper: high })
                }
                other => Err(Error::Invalid(format!(
                    "invalid prior {other:?} for dimension {i}"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        let support = SupportTransform::new(support)?;
        Ok(Self { dims, support })
    }

    pub fn uniform_box(low: f64, high: f64, dim: usize) -> Result<Self> {
        Self::new(vec![PriorDim::Uniform { low, high }; dim])
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[PriorDim] {
        &self.dims
    }

    pub fn support(&self) -> &SupportTransform {
        &self.support
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        self.support.contains(theta)
    }

    /// `-inf` outside the (open) support.
    pub fn log_density(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.log_density_grad(theta)?.0)
    }

    pub fn log_density_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        shape_check("parameter length", self.dims.len(), theta.len())?;
        let mut grad = vec![0.0; theta.len()];
        if !self.contains(theta) {
            return Ok((f64::NEG_INFINITY, grad));
        }
        let mut lp = 0.0;
        for (i, d) in self.dims.iter().enumerate() {
            match *d {
                PriorDim::Uniform { low, high } => lp -= (high - low).ln(),
                PriorDim::Normal { mean, sd } => {
                    let z = (theta[i] - mean) / sd;
                    lp += -0.5 * z * z - sd.ln() - LN_SQRT_2PI;
                    grad[i] = -z / sd;
                }
                PriorDim::ConditionalUniform { on, high } => {
                    let width = high - theta[on];
                    lp -= width.ln();
                    grad[on] += 1.0 / width;
                }
            }
        }
        Ok((lp, grad))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut theta = vec![0.0; self.dims.len()];
        for (i, d) in self.dims.iter().enumerate() {
            match *d {
                PriorDim::Uniform { low, high } => theta[i] = low + (high - low) * open01(rng),
                PriorDim::Normal { mean, sd } => {
                    theta[i] = mean + sd * rng.sample::<f64, _>(StandardNormal)
                }
                PriorDim::ConditionalUniform { .. } => {}
            }
        }
        for (i, d) in self.dims.iter().enumerate() {
            if let PriorDim::ConditionalUniform { on, high } = *d {
                theta[i] = theta[on] + (high - theta[on]) * open01(rng);
            }
        }
        theta
    }
}

/// Uniform on the open interval (0, 1).
fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn normal_log_density() {
        let p = PriorSpec::new(vec![PriorDim::Normal {
            mean: 0.0,
            sd: 10.0,
        }])
        .unwrap();
        let (lp, g) = p.log_density_grad(&[5.0]).unwrap();
        assert!((lp - (-0.125 - 10f64.ln() - LN_SQRT_2PI)).abs() < 1e-12);
        assert!((g[0] + 0.05).abs() < 1e-15);
    }

    #[test]
    fn conditional_uniform_integrates_to_one() {
        // ∫_0^0.5 ∫_η^0.5 (1/0.5)(1/(0.5-η)) dβ dη = 1; check density value and support
        let p = PriorSpec::new(vec![
            PriorDim::ConditionalUniform { on: 1, high: 0.5 },
            PriorDim::Uniform {
                low: 0.0,
                high: 0.5,
            },
        ])
        .unwrap();
        let lp = p.log_density(&[0.3, 0.1]).unwrap();
        assert!((lp - (-(0.5f64.ln()) - 0.4f64.ln())).abs() < 1e-12);
        assert_eq!(p.log_density(&[0.05, 0.1]).unwrap(), f64::NEG_INFINITY);
        let mut rng = substream(1, &[]);
        for _ in 0..1000 {
            let t = p.sample(&mut rng);
            assert!(p.contains(&t));
        }
    }

    #[test]
    fn rejects_bad_priors() {
        assert!(PriorSpec::new(vec![PriorDim::Uniform {
            low: 1.0,
            high: 1.0
        }])
        .is_err());
        assert!(PriorSpec::new(vec![PriorDim::Normal { mean: 0.0, sd: 0.0 }]).is_err());
        assert!(PriorSpec::new(vec![PriorDim::ConditionalUniform { on: 0, high: 1.0 }]).is_err());
    }
}
