//! Simple likelihood, complex posterior: bivariate normal draws whose mean
//! and covariance are nonlinear in five parameters.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{shape_check, Result};

pub const SLCP_JITTER: f64 = 1e-6;

/// Mean and covariance: `μ = (θ₁, θ₂)`, `s₁ = θ₃²`, `s₂ = θ₄²`, `ρ = tanh θ₅`.
pub fn slcp_moments(theta: &[f64]) -> Result<([f64; 2], [[f64; 2]; 2])> {
    shape_check("SLCP parameter length", 5, theta.len())?;
    let s1 = theta[2] * theta[2];
    let s2 = theta[3] * theta[3];
    let rho = theta[4].tanh();
    Ok((
        [theta[0], theta[1]],
        [[s1 * s1, rho * s1 * s2], [rho * s1 * s2, s2 * s2]],
    ))
}

/// `ndraws` i.i.d. draws, flattened as `(x₁, y₁, x₂, y₂, ...)`.
pub fn slcp_simulate<R: Rng + ?Sized>(
    theta: &[f64],
    ndraws: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let (mu, cov) = slcp_moments(theta)?;
    let l11 = (cov[0][0] + SLCP_JITTER).sqrt();
    let l21 = cov[1][0] / l11;
    let l22 = (cov[1][1] + SLCP_JITTER - l21 * l21).max(0.0).sqrt();
    let mut out = Vec::with_capacity(2 * ndraws);
    for _ in 0..ndraws {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        out.push(mu[0] + l11 * z1);
        out.push(mu[1] + l21 * z1 + l22 * z2);
    }
    Ok(out)
}

/// `x + 100 z` with `z ~ N(0, 100 I)`.
pub fn slcp_contaminate<R: Rng + ?Sized>(x: [f64; 2], rng: &mut R) -> [f64; 2] {
    let z = [
        10.0 * rng.sample::<f64, _>(StandardNormal),
        10.0 * rng.sample::<f64, _>(StandardNormal),
    ];
    contaminate_with(x, z)
}

pub fn contaminate_with(x: [f64; 2], z: [f64; 2]) -> [f64; 2] {
    [x[0] + 100.0 * z[0], x[1] + 100.0 * z[1]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn identity_covariance() {
        let mut rng = substream(1, &[]);
        let x = slcp_simulate(&[0.0, 0.0, 1.0, 1.0, 0.0], 10_000, &mut rng).unwrap();
        let n = 10_000.0;
        let (mut m0, mut m1, mut v0, mut v1, mut c) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for p in x.chunks(2) {
            m0 += p[0] / n;
            m1 += p[1] / n;
            v0 += p[0] * p[0] / n;
            v1 += p[1] * p[1] / n;
            c += p[0] * p[1] / n;
        }
        assert!(m0.abs() < 0.05 && m1.abs() < 0.05);
        assert!((v0 - 1.0).abs() < 0.05 && (v1 - 1.0).abs() < 0.05 && c.abs() < 0.05);
    }

    #[test]
    fn extreme_correlation_stays_finite() {
        let mut rng = substream(2, &[]);
        for t5 in [50.0, -50.0] {
            let x = slcp_simulate(&[0.0, 0.0, 1.0, 1.0, t5], 100, &mut rng).unwrap();
            assert!(x.iter().all(|v| v.is_finite()));
            let (_, cov) = slcp_moments(&[0.0, 0.0, 1.0, 1.0, t5]).unwrap();
            assert!((cov[0][1].abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn contamination_scale() {
        assert_eq!(contaminate_with([1.5, -2.0], [0.0, 0.0]), [1.5, -2.0]);
        let mut rng = substream(3, &[]);
        let n = 20_000;
        let mut ss = [0.0; 2];
        for _ in 0..n {
            let y = slcp_contaminate([0.0, 0.0], &mut rng);
            ss[0] += y[0] * y[0] / n as f64;
            ss[1] += y[1] * y[1] / n as f64;
        }
        for v in ss {
            assert!((v / 1e6 - 1.0).abs() < 0.05, "{v}");
        }
    }

    #[test]
    fn wrong_length_is_rejected() {
        assert!(slcp_moments(&[0.0; 4]).is_err());
    }
}
