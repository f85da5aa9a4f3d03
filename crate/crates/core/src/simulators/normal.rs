//! Normal location model and its contaminated true process.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// `n` i.i.d. draws from `N(theta, 1)`.
pub fn cn_simulate<R: Rng + ?Sized>(theta: f64, n: usize, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| theta + rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// `N(theta, 1)` with probability `omega`, otherwise `N(theta, sigma_eps²)`.
pub fn cn_true_simulate<R: Rng + ?Sized>(
    theta: f64,
    omega: f64,
    sigma_eps: f64,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&omega) || !(sigma_eps > 0.0) {
        return Err(Error::Domain(format!(
            "need 0 <= omega <= 1 and sigma_eps > 0, got ({omega}, {sigma_eps})"
        )));
    }
    Ok((0..n)
        .map(|_| {
            let clean = rng.random::<f64>() < omega;
            let z: f64 = rng.sample(StandardNormal);
            theta + if clean { z } else { sigma_eps * z }
        })
        .collect())
}

/// Sample mean and (n−1)-denominator sample variance.
pub fn cn_summaries(y: &[f64]) -> Result<Vec<f64>> {
    if y.len() < 2 {
        return Err(Error::Invalid(format!(
            "need at least 2 observations, got {}",
            y.len()
        )));
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(vec![mean, var])
}
