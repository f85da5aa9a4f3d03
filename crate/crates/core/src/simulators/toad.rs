//! Individual-based toad movement (return to nearest previous refuge).
//!
//! Every toad starts at 0. Each night it forages a stable-distributed
//! distance from its current refuge. With probability `p0` it then returns to
//! the previously used refuge nearest its foraging position; otherwise the
//! foraging position becomes a new refuge.

use rand::Rng;

use super::stable::stable_sample;
use crate::error::{Error, Result};
use crate::nn::Matrix;

pub const TOAD_LAGS: [usize; 4] = [1, 2, 4, 8];
pub const RETURN_DISTANCE: f64 = 10.0;
pub const TOAD_SUMMARY_DIM: usize = 12 * TOAD_LAGS.len();

/// `ndays × ntoads` matrix of daytime refuge positions in metres.
#[derive(Debug, Clone, PartialEq)]
pub struct ToadMatrix(pub Matrix);

impl ToadMatrix {
    pub fn days(&self) -> usize {
        self.0.rows()
    }

    pub fn toads(&self) -> usize {
        self.0.cols()
    }
}

pub fn toad_simulate<R: Rng + ?Sized>(
    alpha: f64,
    scale: f64,
    p0: f64,
    ndays: usize,
    ntoads: usize,
    rng: &mut R,
) -> Result<ToadMatrix> {
    if !(0.0..=1.0).contains(&p0) {
        return Err(Error::Domain(format!(
            "return probability must lie in [0, 1], got {p0}"
        )));
    }
    if ndays == 0 || ntoads == 0 {
        return Err(Error::Invalid("need at least one day and one toad".into()));
    }
    let mut m = Matrix::zeros(ndays, ntoads);
    let mut refuges: Vec<f64> = Vec::with_capacity(ndays);
    for toad in 0..ntoads {
        refuges.clear();
        refuges.push(0.0);
        let mut here = 0.0;
        for day in 1..ndays {
            let foraged = here + stable_sample(alpha, scale, rng)?;
            here = if rng.random::<f64>() < p0 {
                refuges
                    .iter()
                    .copied()
                    .min_by(|a, b| (a - foraged).abs().total_cmp(&(b - foraged).abs()))
                    .expect("day 0 refuge")
            } else {
                refuges.push(foraged);
                foraged
            };
            m.set(day, toad, here);
        }
    }
    Ok(ToadMatrix(m))
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToadSummaries {
    /// Per lag: returns, median non-return distance, 10 log quantile gaps.
    pub values: Vec<f64>,
    /// Indices of slots that were undefined and hold the sentinel 0.
    pub sentinel: Vec<usize>,
}

/// Displacement summaries at lags 1, 2, 4, 8. Displacements are taken down
/// each column (one toad) and pooled over toads.
pub fn toad_summaries(m: &ToadMatrix) -> Result<ToadSummaries> {
    if m.days() <= *TOAD_LAGS.last().expect("lags") {
        return Err(Error::Invalid(format!(
            "need more than 8 days, got {}",
            m.days()
        )));
    }
    if !m.0.is_finite() {
        return Err(Error::Numeric("toad matrix has non-finite entries".into()));
    }
    let mut values = Vec::with_capacity(TOAD_SUMMARY_DIM);
    let mut sentinel = Vec::new();
    for lag in TOAD_LAGS {
        let mut returns = 0usize;
        let mut far = Vec::new();
        for t in lag..m.days() {
            for toad in 0..m.toads() {
                let d = (m.0.get(t, toad) - m.0.get(t - lag, toad)).abs();
                if d < RETURN_DISTANCE {
                    returns += 1;
                } else {
                    far.push(d);
                }
            }
        }
        values.push(returns as f64);
        if far.is_empty() {
            sentinel.extend(values.len()..values.len() + 11);
            values.extend([0.0; 11]);
            continue;
        }
        far.sort_by(f64::total_cmp);
        values.push(quantile_sorted(&far, 0.5));
        let q: Vec<f64> = (0..=10)
            .map(|k| quantile_sorted(&far, k as f64 / 10.0))
            .collect();
        for w in q.windows(2) {
            let gap = (w[1] - w[0]).ln();
            if gap.is_finite() {
                values.push(gap);
            } else {
                sentinel.push(values.len());
                values.push(0.0);
            }
        }
    }
    Ok(ToadSummaries { values, sentinel })
}
