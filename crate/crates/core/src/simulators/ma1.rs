//! MA(1) model with a stochastic-volatility true process.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// `y_t = w_t + θ w_{t−1}` with standard normal innovations, `t = 1..=len`.
pub fn ma1_simulate<R: Rng + ?Sized>(theta: f64, len: usize, rng: &mut R) -> Result<Vec<f64>> {
    if !(-1.0..=1.0).contains(&theta) {
        return Err(Error::Domain(format!(
            "MA(1) coefficient must lie in [-1, 1], got {theta}"
        )));
    }
    let mut prev: f64 = rng.sample(StandardNormal);
    Ok((0..len)
        .map(|_| {
            let w: f64 = rng.sample(StandardNormal);
            let y = w + theta * prev;
            prev = w;
            y
        })
        .collect())
}

/// Stochastic volatility: `z_t = ω + κ z_{t−1} + σ_v v_t`, `y_t = exp(z_t / 2) u_t`,
/// with `z_0` drawn from the stationary law.
pub fn sv_true_simulate<R: Rng + ?Sized>(
    omega: f64,
    kappa: f64,
    sigma_v: f64,
    len: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&kappa) || !(0.0..1.0).contains(&sigma_v) {
        return Err(Error::Domain(format!(
            "need 0 <= kappa, sigma_v < 1, got ({kappa}, {sigma_v})"
        )));
    }
    let mean = omega / (1.0 - kappa);
    let sd = sigma_v / (1.0 - kappa * kappa).sqrt();
    let mut z = mean + sd * rng.sample::<f64, _>(StandardNormal);
    Ok((0..len)
        .map(|_| {
            z = omega + kappa * z + sigma_v * rng.sample::<f64, _>(StandardNormal);
            (z / 2.0).exp() * rng.sample::<f64, _>(StandardNormal)
        })
        .collect())
}

/// Non-centred lag-0 and lag-1 autocovariances, both divided by the series length.
pub fn autocov_summaries(x: &[f64]) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(Error::Invalid(format!(
            "need at least 2 observations, got {}",
            x.len()
        )));
    }
    let t = x.len() as f64;
    let z0 = x.iter().map(|v| v * v).sum::<f64>() / t;
    let z1 = x.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / t;
    Ok(vec![z0, z1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn hand_computed() {
        assert_eq!(autocov_summaries(&[1.0; 4]).unwrap(), vec![1.0, 0.75]);
        assert!(autocov_summaries(&[1.0]).is_err());
    }

    #[test]
    fn white_noise() {
        let mut rng = substream(1, &[]);
        let s = autocov_summaries(&ma1_simulate(0.0, 100_000, &mut rng).unwrap()).unwrap();
        assert!((s[0] - 1.0).abs() < 0.02 && s[1].abs() < 0.02, "{s:?}");
    }

    #[test]
    fn rejects_non_invertible() {
        let mut rng = substream(1, &[]);
        assert!(ma1_simulate(1.5, 10, &mut rng).is_err());
        assert!(sv_true_simulate(0.0, 1.0, 0.3, 10, &mut rng).is_err());
    }

    #[test]
    fn vanishing_volatility_is_white_noise() {
        let mut rng = substream(2, &[]);
        let s = autocov_summaries(&sv_true_simulate(0.0, 0.5, 1e-9, 100_000, &mut rng).unwrap())
            .unwrap();
        assert!((s[0] - 1.0).abs() < 0.02 && s[1].abs() < 0.02, "{s:?}");
    }
}
