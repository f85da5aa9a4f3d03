//! Maximum mean discrepancy between posterior-predictive summaries and the
//! observed summary.

use crate::error::{shape_check, Error, Result};

pub const MIN_MMD_SAMPLES: usize = 100;
pub const MMD_BANDWIDTH_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mmd {
    pub value: f64,
    /// `β = √(median / 2)` of pairwise distances between samples.
    pub bandwidth: f64,
    pub floored: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// `(1/l²) Σᵢⱼ K(Sᵢ, Sⱼ) − (2/l) Σᵢ K(Sᵢ, S(y))` with `K = exp(−‖x − x'‖² / β²)`.
pub fn mmd(samples: &[Vec<f64>], observed: &[f64]) -> Result<Mmd> {
    let l = samples.len();
    if l < MIN_MMD_SAMPLES {
        return Err(Error::Invalid(format!(
            "MMD needs at least {MIN_MMD_SAMPLES} samples, got {l}"
        )));
    }
    for s in samples {
        shape_check("MMD sample dimension", observed.len(), s.len())?;
    }
    let mut d2 = Vec::with_capacity(l * (l - 1) / 2);
    for i in 0..l {
        for j in i + 1..l {
            d2.push(sq_dist(&samples[i], &samples[j]));
        }
    }
    let mut dist: Vec<f64> = d2.iter().map(|v| v.sqrt()).collect();
    dist.sort_by(f64::total_cmp);
    let k = dist.len();
    let median = if k % 2 == 1 {
        dist[k / 2]
    } else {
        0.5 * (dist[k / 2 - 1] + dist[k / 2])
    };
    let mut bandwidth = (median / 2.0).sqrt();
    let floored = !(bandwidth >= MMD_BANDWIDTH_FLOOR);
    if floored {
        log::warn!(
            "MMD median distance is {median:e}; bandwidth floored at {MMD_BANDWIDTH_FLOOR:e}"
        );
        bandwidth = MMD_BANDWIDTH_FLOOR;
    }
    let b2 = bandwidth * bandwidth;
    // diagonal terms are exp(0) = 1
    let self_term =
        (l as f64 + 2.0 * d2.iter().map(|v| (-v / b2).exp()).sum::<f64>()) / (l * l) as f64;
    let cross = samples
        .iter()
        .map(|s| (-sq_dist(s, observed) / b2).exp())
        .sum::<f64>()
        / l as f64;
    Ok(Mmd {
        value: self_term - 2.0 * cross,
        bandwidth,
        floored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_points() {
        let s = vec![vec![1.0, 2.0]; 100];
        let m = mmd(&s, &[1.0, 2.0]).unwrap();
        assert!(m.floored);
        assert!((m.value + 1.0).abs() < 1e-12);
    }

    #[test]
    fn distant_observation_leaves_self_term() {
        let s: Vec<Vec<f64>> = (0..100).map(|i| vec![(i as f64 * 0.37).sin()]).collect();
        let far = mmd(&s, &[1e4]).unwrap();
        let near = mmd(&s, &[0.0]).unwrap();
        assert!(far.value > 0.0 && near.value < far.value);
        assert!(mmd(&s[..50], &[0.0]).is_err());
    }
}
