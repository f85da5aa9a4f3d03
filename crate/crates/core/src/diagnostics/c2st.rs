//! Classifier two-sample test: held-out accuracy of an MLP that tells two
//! sample sets apart.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{shape_check, Error, Result};
use crate::nn::{AdamState, Matrix, Mlp};
use crate::rng::substream;

pub const MIN_C2ST_SAMPLES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct C2stConfig {
    pub test_fraction: f64,
    /// Share of the training fold held out for early stopping.
    pub validation_fraction: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for C2stConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            validation_fraction: 0.1,
            lr: 1e-3,
            batch_size: 64,
            max_epochs: 200,
            patience: 10,
            seed: 0,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Mean logistic loss and accuracy.
fn evaluate(net: &Mlp, x: &Matrix, y: &[f64]) -> Result<(f64, f64)> {
    let out = net.forward_batch(x)?;
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (z, &t) in out.output().data().iter().zip(y) {
        // log(1 + e^{-z}) for t = 1, log(1 + e^{z}) for t = 0
        let s = if t == 1.0 { -z } else { *z };
        loss += s.max(0.0) + (-s.abs()).exp().ln_1p();
        correct += usize::from((*z > 0.0) == (t == 1.0));
    }
    let n = y.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Held-out accuracy; 0.5 means indistinguishable.
///
/// Uses equally many points from each set, standardizes features with the
/// pooled training statistics, and fits a `[d, 10d, 10d, 1]` ReLU network.
pub fn c2st(a: &[Vec<f64>], b: &[Vec<f64>], cfg: &C2stConfig) -> Result<f64> {
    let n = a.len().min(b.len());
    if n < MIN_C2ST_SAMPLES {
        return Err(Error::Invalid(format!(
            "C2ST needs at least {MIN_C2ST_SAMPLES} points per set, got {n}"
        )));
    }
    let d = a[0].len();
    for x in a.iter().chain(b) {
        shape_check("C2ST sample dimension", d, x.len())?;
    }
    let mut rng = substream(cfg.seed, &[]);
    let mut rows: Vec<(&Vec<f64>, f64)> = a[..n]
        .iter()
        .map(|x| (x, 0.0))
        .chain(b[..n].iter().map(|x| (x, 1.0)))
        .collect();
    rows.shuffle(&mut rng);
    // stratified split keeps the test fold balanced
    let (zeros, ones): (Vec<_>, Vec<_>) = rows.into_iter().partition(|r| r.1 == 0.0);
    let n_test = ((n as f64) * cfg.test_fraction).round() as usize;
    let n_val = (((n - n_test) as f64) * cfg.validation_fraction)
        .round()
        .max(1.0) as usize;
    let fold = |lo: usize, hi: usize| -> Vec<(&Vec<f64>, f64)> {
        zeros[lo..hi].iter().chain(&ones[lo..hi]).cloned().collect()
    };
    let test = fold(0, n_test);
    let val = fold(n_test, n_test + n_val);
    let mut train = fold(n_test + n_val, n);

    let mut mean = vec![0.0; d];
    let mut sd = vec![0.0; d];
    for (x, _) in &train {
        for j in 0..d {
            mean[j] += x[j] / train.len() as f64;
        }
    }
    for (x, _) in &train {
        for j in 0..d {
            sd[j] += (x[j] - mean[j]).powi(2) / train.len() as f64;
        }
    }
    let sd: Vec<f64> = sd.into_iter().map(|v| v.sqrt().max(1e-12)).collect();
    let to_matrix = |rows: &[(&Vec<f64>, f64)]| -> Result<(Matrix, Vec<f64>)> {
        let xs: Vec<Vec<f64>> = rows
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&mean)
                    .zip(&sd)
                    .map(|((v, m), s)| (v - m) / s)
                    .collect()
            })
            .collect();
        Ok((Matrix::from_rows(&xs)?, rows.iter().map(|r| r.1).collect()))
    };
    let (x_val, y_val) = to_matrix(&val)?;
    let (x_test, y_test) = to_matrix(&test)?;

    let mut net = Mlp::new(&[d, 10 * d, 10 * d, 1], &mut rng);
    let mut adam = AdamState::new(&net);
    let mut best = (f64::INFINITY, net.clone());
    let mut stale = 0;
    for _ in 0..cfg.max_epochs {
        train.shuffle(&mut rng);
        for batch in train.chunks(cfg.batch_size) {
            let (x, y) = to_matrix(batch)?;
            let trace = net.forward_batch(&x)?;
            let m = batch.len() as f64;
            let upstream: Vec<f64> = trace
                .output()
                .data()
                .iter()
                .zip(&y)
                .map(|(z, t)| (sigmoid(*z) - t) / m)
                .collect();
            let mut grads = net.zeros_like();
            net.backward_batch(
                &trace,
                &Matrix::from_vec(batch.len(), 1, upstream)?,
                Some(&mut grads),
            )?;
            adam.step(&mut net, &grads, cfg.lr)?;
        }
        let (loss, _) = evaluate(&net, &x_val, &y_val)?;
        if loss < best.0 {
            best = (loss, net.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(evaluate(&best.1, &x_test, &y_test)?.1)
}
