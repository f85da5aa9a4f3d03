//! Rank-normalized split R̂ and bulk effective sample size.
//!
//! Degenerate inputs (a constant chain, too few draws) give `None` rather
//! than a number.

use statrs::distribution::{ContinuousCDF, Normal};

use super::ChainSet;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Halve every chain (dropping the middle draw of odd lengths).
fn split(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

fn degenerate(chains: &[Vec<f64>]) -> bool {
    chains.len() < 2
        || chains
            .iter()
            .any(|c| c.len() < 2 || c.iter().any(|v| !v.is_finite()))
        || chains.iter().any(|c| c.iter().all(|&v| v == c[0]))
}

/// Pooled fractional ranks (ties averaged) mapped through the normal quantile.
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut all: Vec<(f64, usize, usize)> = chains
        .iter()
        .enumerate()
        .flat_map(|(c, ch)| ch.iter().enumerate().map(move |(i, &v)| (v, c, i)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let s = all.len() as f64;
    let normal = Normal::standard();
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // 1-based average rank of the tie block
        let rank = (i + j) as f64 / 2.0 + 1.0;
        let z = normal.inverse_cdf((rank - 0.375) / (s + 0.25));
        for &(_, c, k) in &all[i..=j] {
            out[c][k] = z;
        }
        i = j + 1;
    }
    out
}

fn fold(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut pooled: Vec<f64> = chains.iter().flatten().copied().collect();
    pooled.sort_by(f64::total_cmp);
    let n = pooled.len();
    let median = if n % 2 == 1 {
        pooled[n / 2]
    } else {
        0.5 * (pooled[n / 2 - 1] + pooled[n / 2])
    };
    chains
        .iter()
        .map(|c| c.iter().map(|v| (v - median).abs()).collect())
        .collect()
}

/// Classic potential scale reduction on already-split chains of equal length.
fn rhat_basic(chains: &[Vec<f64>]) -> Option<f64> {
    if degenerate(chains) {
        return None;
    }
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = mean(&chains.iter().map(|c| sample_var(c)).collect::<Vec<_>>());
    let b = n * sample_var(&means);
    let var_plus = (n - 1.0) / n * w + b / n;
    Some((var_plus / w).sqrt())
}

/// Split R̂ without rank normalization.
pub fn split_rhat(chains: &[Vec<f64>]) -> Option<f64> {
    rhat_basic(&split(chains))
}

/// Max of bulk and folded rank-normalized split R̂ for one parameter.
fn rhat_rank(chains: &[Vec<f64>]) -> Option<f64> {
    let s = split(chains);
    if degenerate(&s) {
        return None;
    }
    let bulk = rhat_basic(&rank_normalize(&s))?;
    let folded = rhat_basic(&rank_normalize(&fold(&s)))?;
    Some(bulk.max(folded))
}

pub fn rank_normalized_rhat(cs: &ChainSet) -> Vec<Option<f64>> {
    (0..cs.dim()).map(|j| rhat_rank(&cs.column(j))).collect()
}

/// Autocovariance at `lag`, biased (divided by n), for one chain.
fn autocov(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    (0..n - lag)
        .map(|i| (x[i] - m) * (x[i + lag] - m))
        .sum::<f64>()
        / n as f64
}

/// ESS with Geyer's initial monotone sequence, on chains of equal length.
/// Autocovariances are computed lag by lag until the truncation point.
pub fn ess_basic(chains: &[Vec<f64>]) -> Option<f64> {
    if chains.is_empty()
        || chains
            .iter()
            .any(|c| c.len() < 4 || c.len() != chains[0].len())
    {
        return None;
    }
    if chains
        .iter()
        .any(|c| c.iter().any(|v| !v.is_finite()) || c.iter().all(|&v| v == c[0]))
    {
        return None;
    }
    let m = chains.len() as f64;
    let n = chains[0].len();
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let acov_mean = |lag: usize| -> f64 {
        chains
            .iter()
            .zip(&means)
            .map(|(c, &mu)| autocov(c, mu, lag))
            .sum::<f64>()
            / m
    };
    let mean_var = acov_mean(0) * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if chains.len() > 1 {
        var_plus += sample_var(&means);
    }

    let mut rho = vec![0.0; n];
    rho[0] = 1.0;
    let mut rho_even = 1.0;
    let mut rho_odd = 1.0 - (mean_var - acov_mean(1)) / var_plus;
    rho[1] = rho_odd;
    let mut t = 0;
    while t + 5 < n && rho_even + rho_odd > 0.0 {
        t += 2;
        rho_even = 1.0 - (mean_var - acov_mean(t)) / var_plus;
        rho_odd = 1.0 - (mean_var - acov_mean(t + 1)) / var_plus;
        if rho_even + rho_odd >= 0.0 {
            rho[t] = rho_even;
            rho[t + 1] = rho_odd;
        }
    }
    let max_t = t;
    if rho_even > 0.0 {
        rho[max_t] = rho_even;
    }
    // monotone sequence
    let mut t = 1;
    while t + 3 <= max_t {
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t] {
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0;
            rho[t + 2] = rho[t + 1];
        }
        t += 2;
    }
    let total = m * nf;
    let tau = (-1.0 + 2.0 * rho[..max_t].iter().sum::<f64>() + rho[max_t]).max(1.0 / total.log10());
    Some(total / tau)
}

/// Bulk ESS: the estimator above on rank-normalized split chains.
pub fn effective_sample_size(cs: &ChainSet) -> Vec<Option<f64>> {
    (0..cs.dim())
        .map(|j| {
            let s = split(&cs.column(j));
            if degenerate(&s) {
                return None;
            }
            ess_basic(&rank_normalize(&s))
        })
        .collect()
}
