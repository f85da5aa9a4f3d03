//! Accumulated simulations and their standardization.

use serde::{Deserialize, Serialize};

use crate::error::{shape_check, Error, Result};
use crate::nn::Matrix;

/// Standard deviations below this are replaced by it.
pub const STD_FLOOR: f64 = 1e-8;

/// Simulated `(θ, summary)` pairs in raw units, tagged with their round.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    theta: Vec<Vec<f64>>,
    summaries: Vec<Vec<f64>>,
    rounds: Vec<usize>,
}

impl TrainingSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, theta: Vec<f64>, summary: Vec<f64>, round: usize) -> Result<()> {
        if let (Some(t), Some(s)) = (self.theta.first(), self.summaries.first()) {
            shape_check("parameter length", t.len(), theta.len())?;
            shape_check("summary length", s.len(), summary.len())?;
        }
        if theta.is_empty() || summary.is_empty() {
            return Err(Error::Shape("empty parameter or summary vector".into()));
        }
        if theta.iter().chain(&summary).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("training pairs must be finite".into()));
        }
        self.theta.push(theta);
        self.summaries.push(summary);
        self.rounds.push(round);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn theta(&self) -> &[Vec<f64>] {
        &self.theta
    }

    pub fn summaries(&self) -> &[Vec<f64>] {
        &self.summaries
    }

    pub fn rounds(&self) -> &[usize] {
        &self.rounds
    }

    pub fn param_dim(&self) -> usize {
        self.theta.first().map_or(0, Vec::len)
    }

    pub fn summary_dim(&self) -> usize {
        self.summaries.first().map_or(0, Vec::len)
    }
}

/// Per-coordinate affine maps for summaries and for the conditioning θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub context_mean: Vec<f64>,
    pub context_std: Vec<f64>,
}

/// Mean and (n−1)-denominator standard deviation of each column.
fn column_stats(rows: &[Vec<f64>], what: &str) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; d];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m) / (n - 1.0);
        }
    }
    let std = var
        .into_iter()
        .enumerate()
        .map(|(j, v)| {
            let s = v.sqrt();
            if s < STD_FLOOR {
                log::warn!(
                    "{what} dimension {j} has standard deviation {s:e}; floored at {STD_FLOOR:e}"
                );
                STD_FLOOR
            } else {
                s
            }
        })
        .collect();
    (mean, std)
}

impl StandardizationStats {
    pub fn fit(data: &TrainingSet) -> Result<Self> {
        if data.len() < 2 {
            return Err(Error::Invalid(format!(
                "standardization needs at least 2 pairs, got {}",
                data.len()
            )));
        }
        let (mean, std) = column_stats(&data.summaries, "summary");
        let (context_mean, context_std) = column_stats(&data.theta, "parameter");
        Ok(Self {
            mean,
            std,
            context_mean,
            context_std,
        })
    }

    pub fn summary(&self, s: &[f64]) -> Result<Vec<f64>> {
        shape_check("summary length", self.mean.len(), s.len())?;
        Ok(s.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), sd)| (v - m) / sd)
            .collect())
    }

    pub fn context(&self, theta: &[f64]) -> Result<Vec<f64>> {
        shape_check("parameter length", self.context_mean.len(), theta.len())?;
        Ok(theta
            .iter()
            .zip(&self.context_mean)
            .zip(&self.context_std)
            .map(|((v, m), sd)| (v - m) / sd)
            .collect())
    }

    /// Inverse of [`Self::summary`].
    pub fn unstandardize_summary(&self, z: &[f64]) -> Result<Vec<f64>> {
        shape_check("summary length", self.mean.len(), z.len())?;
        Ok(z.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), sd)| v * sd + m)
            .collect())
    }
}

/// Standardized training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub summaries: Matrix,
    pub context: Matrix,
    pub observed: Vec<f64>,
    pub stats: StandardizationStats,
}

/// Standardize summaries and parameters with statistics of the whole set,
/// and map the observed summary with the same summary statistics.
pub fn standardize(data: &TrainingSet, observed: &[f64]) -> Result<Standardized> {
    let stats = StandardizationStats::fit(data)?;
    let observed = stats.summary(observed)?;
    let summaries = data
        .summaries
        .iter()
        .map(|s| stats.summary(s))
        .collect::<Result<Vec<_>>>()?;
    let context = data
        .theta
        .iter()
        .map(|t| stats.context(t))
        .collect::<Result<Vec<_>>>()?;
    Ok(Standardized {
        summaries: Matrix::from_rows(&summaries)?,
        context: Matrix::from_rows(&context)?,
        observed,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[(f64, f64)]) -> TrainingSet {
        let mut t = TrainingSet::new();
        for &(a, b) in rows {
            t.push(vec![a], vec![b], 0).unwrap();
        }
        t
    }

    #[test]
    fn two_points() {
        let s = standardize(&set(&[(0.0, 1.0), (1.0, 3.0)]), &[3.0]).unwrap();
        assert_eq!(s.stats.mean, vec![2.0]);
        assert!((s.stats.std[0] - 2f64.sqrt()).abs() < 1e-15);
        assert!((s.observed[0] - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn idempotent() {
        let data = set(&[(0.0, 1.0), (1.0, 3.0), (4.0, -2.0), (2.0, 7.5)]);
        let s = standardize(&data, &[0.0]).unwrap();
        let mut again = TrainingSet::new();
        for i in 0..data.len() {
            again
                .push(s.context.row(i).to_vec(), s.summaries.row(i).to_vec(), 0)
                .unwrap();
        }
        let s2 = StandardizationStats::fit(&again).unwrap();
        for v in s2.mean.iter().chain(&s2.context_mean) {
            assert!(v.abs() < 1e-12);
        }
        for v in s2.std.iter().chain(&s2.context_std) {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_dimension_is_floored() {
        let s = StandardizationStats::fit(&set(&[(0.0, 2.0), (1.0, 2.0)])).unwrap();
        assert_eq!(s.std, vec![STD_FLOOR]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(standardize(&set(&[(0.0, 1.0)]), &[0.0]).is_err());
        let mut t = set(&[(0.0, 1.0)]);
        assert!(t.push(vec![0.0], vec![f64::NAN], 0).is_err());
        assert!(t.push(vec![0.0, 1.0], vec![1.0], 0).is_err());
        assert!(standardize(&set(&[(0.0, 1.0), (1.0, 2.0)]), &[0.0, 1.0]).is_err());
    }

    #[test]
    fn round_trip_summary() {
        let s = StandardizationStats::fit(&set(&[(0.0, 1.0), (1.0, 3.0), (3.0, 8.0)])).unwrap();
        let z = s.summary(&[5.0]).unwrap();
        assert!((s.unstandardize_summary(&z).unwrap()[0] - 5.0).abs() < 1e-12);
    }
}
