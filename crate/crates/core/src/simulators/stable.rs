//! Symmetric alpha-stable variates by the Chambers–Mallows–Stuck method.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};

/// One symmetric stable draw with stability `alpha` in [1, 2] and scale `scale`.
///
/// `alpha = 2` is Gaussian with variance `2 scale²`; `alpha = 1` is Cauchy
/// with scale `scale`.
pub fn stable_sample<R: Rng + ?Sized>(alpha: f64, scale: f64, rng: &mut R) -> Result<f64> {
    if !(1.0..=2.0).contains(&alpha) || !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Domain(format!(
            "stable law needs 1 <= alpha <= 2 and scale > 0, got ({alpha}, {scale})"
        )));
    }
    Ok(scale * standard_stable(alpha, rng))
}

fn standard_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let v = loop {
        let v = FRAC_PI_2 * (2.0 * rng.random::<f64>() - 1.0);
        if v.abs() < FRAC_PI_2 {
            break v;
        }
    };
    if alpha == 1.0 {
        return v.tan();
    }
    let w: f64 = loop {
        let w: f64 = Exp1.sample(rng);
        if w > 0.0 {
            break w;
        }
    };
    (alpha * v).sin() / v.cos().powf(1.0 / alpha)
        * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
}
