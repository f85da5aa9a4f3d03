//! Robust sequential neural likelihood.
//!
//! Simulation-based inference that trains a conditional normalizing flow on
//! simulated summaries and samples the joint posterior of the parameters and
//! per-summary adjustment parameters with NUTS. Adjustments absorb observed
//! summaries the model cannot reproduce, so misspecified summaries are
//! detected rather than allowed to distort the parameter posterior.

pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod mcmc;
pub mod nn;
pub mod prior;
pub mod rng;
pub mod rsnl;
pub mod simulators;

pub use error::{Error, Result};
