//! SIR epidemic with a stochastic effective reproduction number.
//!
//! Compartments are population fractions. `dS = −β̃ S I`, `dI = β̃ S I − η I`
//! with `β̃_t = η R_t`, and `R_t` follows a mean-reverting diffusion towards
//! `β / η`. Each `dt` step advances the compartments by one RK4 step with
//! `R_t` held fixed, then takes one Euler–Maruyama step for `R_t`, reflected
//! at zero.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diffusion {
    /// `σ √max(R_t, 0) dW`.
    StateDependent,
    /// `σ √(β / η) dW`.
    Initial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SirConfig {
    pub days: usize,
    pub population: f64,
    pub initial_infected: f64,
    pub reversion: f64,
    pub volatility: f64,
    pub dt: f64,
    pub diffusion: Diffusion,
}

impl Default for SirConfig {
    fn default() -> Self {
        Self {
            days: 365,
            population: 100_000.0,
            initial_infected: 100.0,
            reversion: 0.5,
            volatility: 0.5,
            dt: 0.1,
            diffusion: Diffusion::StateDependent,
        }
    }
}

impl SirConfig {
    pub(crate) fn validate(&self, beta: f64, eta: f64) -> Result<()> {
        if !(eta > 0.0 && eta <= beta && beta.is_finite()) {
            return Err(Error::Domain(format!(
                "need 0 < eta <= beta, got beta = {beta}, eta = {eta}"
            )));
        }
        let steps = 1.0 / self.dt;
        if !(self.dt > 0.0 && (steps - steps.round()).abs() < 1e-9) {
            return Err(Error::Invalid(format!(
                "dt must divide one day, got {}",
                self.dt
            )));
        }
        if self.days < 2
            || !(self.initial_infected > 0.0 && self.initial_infected < self.population)
        {
            return Err(Error::Invalid(
                "need at least 2 days and 0 < initial_infected < population".into(),
            ));
        }
        Ok(())
    }
}

fn deriv(s: f64, i: f64, rate: f64, eta: f64) -> (f64, f64) {
    let inf = rate * s * i;
    (-inf, inf - eta * i)
}

fn rk4(s: f64, i: f64, rate: f64, eta: f64, h: f64) -> (f64, f64) {
    let (a1, b1) = deriv(s, i, rate, eta);
    let (a2, b2) = deriv(s + 0.5 * h * a1, i + 0.5 * h * b1, rate, eta);
    let (a3, b3) = deriv(s + 0.5 * h * a2, i + 0.5 * h * b2, rate, eta);
    let (a4, b4) = deriv(s + h * a3, i + h * b3, rate, eta);
    (
        s + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4),
        i + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4),
    )
}

/// Daily infected counts (scaled to `population`) at days `0..days`.
pub fn sir_simulate<R: Rng + ?Sized>(
    beta: f64,
    eta: f64,
    cfg: &SirConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    cfg.validate(beta, eta)?;
    let steps = (1.0 / cfg.dt).round() as usize;
    let r0 = beta / eta;
    let sqrt_dt = cfg.dt.sqrt();
    let mut i = cfg.initial_infected / cfg.population;
    let mut s = 1.0 - i;
    let mut r_t = r0;
    let mut out = Vec::with_capacity(cfg.days);
    out.push(i * cfg.population);
    for day in 1..cfg.days {
        for _ in 0..steps {
            (s, i) = rk4(s, i, eta * r_t, eta, cfg.dt);
            let scale = match cfg.diffusion {
                Diffusion::StateDependent => r_t.max(0.0).sqrt(),
                Diffusion::Initial => r0.sqrt(),
            };
            let noise = if cfg.volatility > 0.0 {
                cfg.volatility * scale * sqrt_dt * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            r_t = (r_t + cfg.reversion * (r0 - r_t) * cfg.dt + noise).abs();
        }
        if !(s.is_finite() && i.is_finite() && s > -1e-9 && i > -1e-9 && s + i < 1.0 + 1e-9) {
            return Err(Error::Simulation(format!(
                "SIR state left the simplex on day {day}: S = {s}, I = {i}"
            )));
        }
        out.push(i.max(0.0) * cfg.population);
    }
    Ok(out)
}

/// Reporting lag: weekend days (indices ≡ 5, 6 mod 7, day 0 a Monday) lose 5%,
/// Mondays after the first week gain 10%.
pub fn apply_weekend_reporting(counts: &mut [f64]) {
    for (day, c) in counts.iter_mut().enumerate() {
        match day % 7 {
            5 | 6 => *c *= 0.95,
            0 if day >= 7 => *c *= 1.10,
            _ => {}
        }
    }
}

/// The true process: the SIR path with the reporting artifact applied.
pub fn sir_true_simulate<R: Rng + ?Sized>(
    beta: f64,
    eta: f64,
    cfg: &SirConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut counts = sir_simulate(beta, eta, cfg, rng)?;
    apply_weekend_reporting(&mut counts);
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SirSummaries {
    /// Mean, median, max, day of max, half day, lag-1 autocorrelation.
    pub values: Vec<f64>,
    /// The series (or one of its lagged halves) was constant; autocorrelation reported as 0.
    pub constant: bool,
}

/// Pearson correlation of `(x_t, x_{t+1})` pairs; `None` when either side is constant.
pub fn lag1_correlation(x: &[f64]) -> Option<f64> {
    let (a, b) = (&x[..x.len() - 1], &x[1..]);
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (u, v) in a.iter().zip(b) {
        cov += (u - ma) * (v - mb);
        va += (u - ma) * (u - ma);
        vb += (v - mb) * (v - mb);
    }
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

/// Days are 0-indexed. The half day is the first day on which the cumulative
/// count reaches half of the total.
pub fn sir_summaries(counts: &[f64]) -> Result<SirSummaries> {
    if counts.len() < 2 || counts.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("need at least 2 finite daily counts".into()));
    }
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let mut sorted = counts.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len();
    let median = if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    };
    let (argmax, max) =
        counts
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (d, v)| {
                if v > best.1 {
                    (d, v)
                } else {
                    best
                }
            });
    let total: f64 = counts.iter().sum();
    let mut cum = 0.0;
    let half_day = counts
        .iter()
        .position(|v| {
            cum += v;
            cum >= 0.5 * total
        })
        .unwrap_or(counts.len() - 1);
    let acf = lag1_correlation(counts);
    let constant = acf.is_none();
    let acf = acf.unwrap_or(0.0);
    Ok(SirSummaries {
        values: vec![mean, median, max, argmax as f64, half_day as f64, acf],
        constant,
    })
}
