//! Maps between a bounded parameter space and `R^d`.
//!
//! `log_jacobian` is always `log |d constrained / d unconstrained|`, the term
//! added to the target density when sampling in unconstrained space.

use serde::{Deserialize, Serialize};

use crate::error::{shape_check, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Support {
    /// The whole real line.
    Real,
    /// `(lower, ∞)` via `x = lower + exp(u)`.
    LowerBound(f64),
    /// `(lower, upper)` via a scaled logistic.
    Interval(f64, f64),
    /// `(x[on], upper)`: the lower bound is another, unconditioned coordinate.
    AboveOther { on: usize, upper: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportTransform {
    dims: Vec<Support>,
}

#[inline]
fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `log σ(u)` without overflow.
#[inline]
fn log_sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        -(-u).exp().ln_1p()
    } else {
        u - u.exp().ln_1p()
    }
}

/// Constrained point, its log-Jacobian, and what the gradient pull-back needs.
#[derive(Debug, Clone)]
pub struct Unconstrain {
    pub x: Vec<f64>,
    pub log_jacobian: f64,
    sig: Vec<f64>,
}

impl SupportTransform {
    pub fn new(dims: Vec<Support>) -> Result<Self> {
        for (i, s) in dims.iter().enumerate() {
            match *s {
                Support::Real => {}
                Support::LowerBound(a) if a.is_finite() => {}
                Support::Interval(a, b) if a.is_finite() && b.is_finite() && a < b => {}
                Support::AboveOther { on, upper }
                    if upper.is_finite() && on != i && on < dims.len() =>
                {
                    if matches!(dims[on], Support::AboveOther { .. }) {
                        return Err(Error::Invalid(format!(
                            "dimension {i} is conditioned on dimension {on}, which is itself conditional"
                        )));
                    }
                }
                _ => {
                    return Err(Error::Invalid(format!(
                        "invalid support {s:?} for dimension {i}"
                    )))
                }
            }
        }
        Ok(Self { dims })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dims: vec![Support::Real; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[Support] {
        &self.dims
    }

    /// Strictly inside the support?
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dims.len()
            && self.dims.iter().zip(x).all(|(s, &v)| {
                v.is_finite()
                    && match *s {
                        Support::Real => true,
                        Support::LowerBound(a) => v > a,
                        Support::Interval(a, b) => v > a && v < b,
                        Support::AboveOther { on, upper } => v > x[on] && v < upper,
                    }
            })
    }

    /// Constrained → unconstrained, with the log-Jacobian at that point.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        shape_check("constrained point", self.dims.len(), x.len())?;
        if !self.contains(x) {
            return Err(Error::Domain(format!(
                "{x:?} is not strictly inside the support"
            )));
        }
        let u: Vec<f64> = self
            .dims
            .iter()
            .zip(x)
            .map(|(s, &v)| match *s {
                Support::Real => v,
                Support::LowerBound(a) => (v - a).ln(),
                Support::Interval(a, b) => ((v - a) / (b - v)).ln(),
                Support::AboveOther { on, upper } => ((v - x[on]) / (upper - v)).ln(),
            })
            .collect();
        let lj = self.inverse(&u)?.log_jacobian;
        Ok((u, lj))
    }

    /// Unconstrained → constrained.
    pub fn inverse(&self, u: &[f64]) -> Result<Unconstrain> {
        shape_check("unconstrained point", self.dims.len(), u.len())?;
        let d = self.dims.len();
        let mut x = vec![0.0; d];
        let mut sig = vec![0.0; d];
        let mut lj = 0.0;
        // unconditioned coordinates first
        for (i, s) in self.dims.iter().enumerate() {
            match *s {
                Support::Real => x[i] = u[i],
                Support::LowerBound(a) => {
                    x[i] = a + u[i].exp();
                    lj += u[i];
                }
                Support::Interval(a, b) => {
                    sig[i] = sigmoid(u[i]);
                    x[i] = a + (b - a) * sig[i];
                    lj += (b - a).ln() + log_sigmoid(u[i]) + log_sigmoid(-u[i]);
                }
                Support::AboveOther { .. } => {}
            }
        }
        for (i, s) in self.dims.iter().enumerate() {
            if let Support::AboveOther { on, upper } = *s {
                let lo = x[on];
                if !(upper > lo) {
                    return Err(Error::Domain(format!(
                        "empty interval ({lo}, {upper}) for dimension {i}"
                    )));
                }
                sig[i] = sigmoid(u[i]);
                x[i] = lo + (upper - lo) * sig[i];
                lj += (upper - lo).ln() + log_sigmoid(u[i]) + log_sigmoid(-u[i]);
            }
        }
        Ok(Unconstrain {
            x,
            log_jacobian: lj,
            sig,
        })
    }

    /// Gradient in unconstrained space of `log p(x(u)) + log_jacobian(u)`,
    /// given `grad_x = ∇_x log p` at `t.x`.
    pub fn pull_back(&self, t: &Unconstrain, u: &[f64], grad_x: &[f64]) -> Vec<f64> {
        let mut gx = grad_x.to_vec();
        let mut gu = vec![0.0; self.dims.len()];
        for (i, s) in self.dims.iter().enumerate() {
            if let Support::AboveOther { on, upper } = *s {
                let span = upper - t.x[on];
                let sg = t.sig[i];
                gu[i] = gx[i] * span * sg * (1.0 - sg) + (1.0 - 2.0 * sg);
                gx[on] += gx[i] * (1.0 - sg) - 1.0 / span;
            }
        }
        for (i, s) in self.dims.iter().enumerate() {
            match *s {
                Support::Real => gu[i] = gx[i],
                Support::LowerBound(_) => gu[i] = gx[i] * u[i].exp() + 1.0,
                Support::Interval(a, b) => {
                    let sg = t.sig[i];
                    gu[i] = gx[i] * (b - a) * sg * (1.0 - sg) + (1.0 - 2.0 * sg);
                }
                Support::AboveOther { .. } => {}
            }
        }
        gu
    }
}
