//! Calibration and misspecification diagnostics.

mod c2st;
mod coverage;
mod hdr;
mod kde;
mod misspec;
mod mmd;
mod ppc;

pub use c2st::{c2st, C2stConfig, MIN_C2ST_SAMPLES};
pub use coverage::{empirical_coverage, replicate_membership, CoverageReport, MIN_REPLICATES};
pub use hdr::{hdr_contains, Hdr};
pub use kde::{kde_log_density, Kde, BANDWIDTH_FLOOR, MIN_KDE_SAMPLES};
pub use misspec::{
    ks_distance, prior_posterior_distance, MisspecReport, MIN_POSTERIOR_DRAWS, MISSPEC_THRESHOLD,
    PRIOR_REFERENCE_DRAWS,
};
pub use mmd::{mmd, Mmd, MIN_MMD_SAMPLES, MMD_BANDWIDTH_FLOOR};
pub use ppc::{posterior_predictive, PosteriorPredictive};
