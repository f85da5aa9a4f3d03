//! Posterior predictive summaries.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{substream, tag};
use crate::simulators::Simulator;

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorPredictive {
    /// Raw summaries, one row per successful simulation.
    pub summaries: Vec<Vec<f64>>,
    pub failures: usize,
}

/// Simulate once at each of `n` draws spread evenly through `theta`.
pub fn posterior_predictive(
    theta: &[Vec<f64>],
    sim: &dyn Simulator,
    n: usize,
    seed: u64,
) -> Result<PosteriorPredictive> {
    if n == 0 || n > theta.len() {
        return Err(Error::Invalid(format!(
            "need 1 <= n <= {} draws, got {n}",
            theta.len()
        )));
    }
    let results: Vec<Option<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let t = &theta[i * theta.len() / n];
            let mut rng = substream(seed, &[tag::DIAGNOSE, i as u64]);
            match sim.simulate(t, &mut rng) {
                Ok(s) if s.iter().all(|v| v.is_finite()) => Some(s),
                Ok(_) => None,
                Err(e) => {
                    log::debug!("posterior predictive simulation {i} failed: {e}");
                    None
                }
            }
        })
        .collect();
    let failures = results.iter().filter(|r| r.is_none()).count();
    if failures > 0 {
        log::warn!("{failures} of {n} posterior predictive simulations failed");
    }
    Ok(PosteriorPredictive {
        summaries: results.into_iter().flatten().collect(),
        failures,
    })
}
