//! Comparing adjustment-parameter posteriors with their priors.

use serde::{Deserialize, Serialize};

use crate::error::{shape_check, Error, Result};
use crate::rng::Rng;
use crate::rsnl::AdjustmentPrior;

pub const MISSPEC_THRESHOLD: f64 = 0.25;
pub const MIN_POSTERIOR_DRAWS: usize = 500;
pub const PRIOR_REFERENCE_DRAWS: usize = 20_000;

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisspecReport {
    pub distances: Vec<f64>,
    pub flagged: Vec<bool>,
    pub threshold: f64,
}

impl MisspecReport {
    pub fn flagged_indices(&self) -> Vec<usize> {
        self.flagged
            .iter()
            .enumerate()
            .filter(|(_, f)| **f)
            .map(|(i, _)| i)
            .collect()
    }
}

/// KS distance between each `γᵢ` posterior and fresh draws from its prior.
pub fn prior_posterior_distance(
    gamma: &[Vec<f64>],
    prior: &AdjustmentPrior,
    threshold: f64,
    rng: &mut Rng,
) -> Result<MisspecReport> {
    if gamma.len() < MIN_POSTERIOR_DRAWS {
        return Err(Error::Invalid(format!(
            "need at least {MIN_POSTERIOR_DRAWS} posterior draws, got {}",
            gamma.len()
        )));
    }
    for g in gamma {
        shape_check("adjustment dimension", prior.dim(), g.len())?;
    }
    let reference: Vec<Vec<f64>> = (0..PRIOR_REFERENCE_DRAWS)
        .map(|_| prior.sample(rng))
        .collect();
    let distances: Vec<f64> = (0..prior.dim())
        .map(|i| {
            let post: Vec<f64> = gamma.iter().map(|g| g[i]).collect();
            let pri: Vec<f64> = reference.iter().map(|g| g[i]).collect();
            ks_distance(&post, &pri)
        })
        .collect();
    Ok(MisspecReport {
        flagged: distances.iter().map(|d| *d > threshold).collect(),
        distances,
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn ks_hand_computed() {
        assert_eq!(ks_distance(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(ks_distance(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        assert!((ks_distance(&[1.0, 2.0, 3.0, 4.0], &[2.5, 3.5]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn prior_draws_are_not_flagged_and_shifts_are() {
        let prior = AdjustmentPrior {
            scales: vec![1.0, 0.5],
        };
        let mut rng = substream(1, &[]);
        let post: Vec<Vec<f64>> = (0..5000)
            .map(|_| {
                let g = prior.sample(&mut rng);
                vec![g[0], g[1] + 1.5]
            })
            .collect();
        let r = prior_posterior_distance(&post, &prior, MISSPEC_THRESHOLD, &mut rng).unwrap();
        assert!(r.distances[0] <= 0.05, "{:?}", r.distances);
        // shift 3λ: sup |F(x) − F(x − 3λ)| = 1 − e^{−1.5}
        assert!(r.distances[1] >= 0.6, "{:?}", r.distances);
        assert_eq!(r.flagged_indices(), vec![1]);
    }
}
