use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Flow, FlowConfig};
use crate::error::{shape_check, Error, Result};
use crate::nn::{AdamState, Matrix};
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            batch_size: 256,
            max_epochs: 500,
            patience: 20,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Invalid(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Invalid("batch_size must be at least 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Invalid(format!(
                "validation_fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        if self.patience >= self.max_epochs {
            return Err(Error::Invalid(format!(
                "patience ({}) must be below max_epochs ({})",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub stopped_early: bool,
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
}

/// Fit a fresh flow to `(x, ctx)` pairs by minibatch Adam on the mean
/// negative log-likelihood, with early stopping on a held-out split.
/// Returns the best-validation parameters.
pub fn train_flow(
    x: &Matrix,
    ctx: &Matrix,
    cfg: &TrainConfig,
    arch: &FlowConfig,
) -> Result<(Flow, TrainReport)> {
    cfg.validate()?;
    shape_check("training rows", x.rows(), ctx.rows())?;
    let n = x.rows();
    if n < 20 {
        return Err(Error::Invalid(format!(
            "need at least 20 training pairs, got {n}"
        )));
    }
    let mut rng = substream(cfg.seed, &[]);
    let mut flow = Flow::new(x.cols(), ctx.cols(), arch, &mut rng)?;

    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    let n_val = ((n as f64 * cfg.validation_fraction).round() as usize).clamp(1, n - 1);
    let (val_idx, train_idx) = idx.split_at(n_val);
    let (xv, cv) = (x.select_rows(val_idx), ctx.select_rows(val_idx));
    let mut train_idx = train_idx.to_vec();

    let mut adam: Vec<AdamState> = flow
        .layers()
        .iter()
        .map(|l| AdamState::new(&l.conditioner))
        .collect();
    let mut best = flow.clone();
    let mut report = TrainReport {
        epochs_run: 0,
        best_epoch: 0,
        best_validation_loss: f64::INFINITY,
        stopped_early: false,
        train_loss: Vec::new(),
        validation_loss: Vec::new(),
    };
    let mut since_best = 0;

    for epoch in 0..cfg.max_epochs {
        train_idx.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in train_idx.chunks(cfg.batch_size) {
            let mut grads = flow.zero_grads();
            let loss = flow
                .nll_grad(&x.select_rows(chunk), &ctx.select_rows(chunk), &mut grads)
                .map_err(|e| Error::Training {
                    epoch,
                    reason: e.to_string(),
                })?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    reason: format!("training loss {loss}"),
                });
            }
            total += loss * chunk.len() as f64;
            for ((layer, state), g) in flow.layers_mut().iter_mut().zip(&mut adam).zip(&grads) {
                state
                    .step(&mut layer.conditioner, g, cfg.lr)
                    .map_err(|e| Error::Training {
                        epoch,
                        reason: e.to_string(),
                    })?;
            }
        }
        let val = validation_loss(&flow, &xv, &cv).map_err(|e| Error::Training {
            epoch,
            reason: e.to_string(),
        })?;
        if !val.is_finite() {
            return Err(Error::Training {
                epoch,
                reason: format!("validation loss {val}"),
            });
        }
        report.train_loss.push(total / train_idx.len() as f64);
        report.validation_loss.push(val);
        report.epochs_run = epoch + 1;
        if val < report.best_validation_loss {
            report.best_validation_loss = val;
            report.best_epoch = epoch;
            best.clone_from(&flow);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                report.stopped_early = true;
                break;
            }
        }
        log::debug!(
            "epoch {epoch}: train {:.4} val {val:.4}",
            total / train_idx.len() as f64
        );
    }
    Ok((best, report))
}

fn validation_loss(flow: &Flow, x: &Matrix, ctx: &Matrix) -> Result<f64> {
    let lp = flow.log_prob_batch(x, ctx)?;
    Ok(-lp.iter().sum::<f64>() / lp.len() as f64)
}
