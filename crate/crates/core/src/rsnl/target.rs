//! Joint posterior of `(θ, Γ)` under the flow surrogate.

use super::{AdjustmentPrior, StandardizationStats};
use crate::error::{shape_check, Result};
use crate::flow::Flow;
use crate::mcmc::{Support, SupportTransform, TargetDensity};
use crate::prior::PriorSpec;

/// `log q(S̃(y) − Γ | θ̃) + log π(θ) + Σ log Laplace(γᵢ; 0, λᵢ)`.
///
/// Without an adjustment prior the target is `θ` alone (plain SNL).
#[derive(Debug)]
pub struct JointTarget<'a> {
    flow: &'a Flow,
    stats: &'a StandardizationStats,
    prior: &'a PriorSpec,
    adjustment: Option<&'a AdjustmentPrior>,
    observed: Vec<f64>,
    support: SupportTransform,
}

impl<'a> JointTarget<'a> {
    /// `observed` is the standardized observed summary.
    pub fn new(
        flow: &'a Flow,
        stats: &'a StandardizationStats,
        prior: &'a PriorSpec,
        adjustment: Option<&'a AdjustmentPrior>,
        observed: Vec<f64>,
    ) -> Result<Self> {
        shape_check(
            "observed summary length",
            flow.summary_dim(),
            observed.len(),
        )?;
        shape_check("flow context dimension", prior.dim(), flow.context_dim())?;
        shape_check(
            "summary standardization",
            flow.summary_dim(),
            stats.mean.len(),
        )?;
        shape_check(
            "parameter standardization",
            prior.dim(),
            stats.context_mean.len(),
        )?;
        let mut dims = prior.support().dims().to_vec();
        if let Some(a) = adjustment {
            shape_check("adjustment prior dimension", flow.summary_dim(), a.dim())?;
            dims.extend(std::iter::repeat_n(Support::Real, a.dim()));
        }
        Ok(Self {
            flow,
            stats,
            prior,
            adjustment,
            observed,
            support: SupportTransform::new(dims)?,
        })
    }

    pub fn param_dim(&self) -> usize {
        self.prior.dim()
    }

    /// Value with separate θ and Γ gradients.
    pub fn evaluate(&self, theta: &[f64], gamma: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        shape_check("parameter length", self.prior.dim(), theta.len())?;
        let adj_dim = self.adjustment.map_or(0, AdjustmentPrior::dim);
        shape_check("adjustment length", adj_dim, gamma.len())?;
        let (lp_prior, mut g_theta) = self.prior.log_density_grad(theta)?;
        if lp_prior == f64::NEG_INFINITY {
            return Ok((f64::NEG_INFINITY, g_theta, vec![0.0; gamma.len()]));
        }
        let ctx = self.stats.context(theta)?;
        let x: Vec<f64> = if gamma.is_empty() {
            self.observed.clone()
        } else {
            self.observed
                .iter()
                .zip(gamma)
                .map(|(s, g)| s - g)
                .collect()
        };
        let (lp_flow, gx, gctx) = self.flow.log_prob_grad(&x, &ctx)?;
        for ((g, gc), sd) in g_theta.iter_mut().zip(&gctx).zip(&self.stats.context_std) {
            *g += gc / sd;
        }
        let mut value = lp_flow + lp_prior;
        let mut g_gamma = Vec::new();
        if let Some(a) = self.adjustment {
            let (lp_adj, g_adj) = a.log_density_grad(gamma);
            value += lp_adj;
            g_gamma = g_adj.iter().zip(&gx).map(|(ga, gf)| ga - gf).collect();
        }
        Ok((value, g_theta, g_gamma))
    }
}

impl TargetDensity for JointTarget<'_> {
    fn dim(&self) -> usize {
        self.support.dim()
    }

    fn log_density_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        shape_check("state length", self.support.dim(), x.len())?;
        let p = self.prior.dim();
        let (v, mut g, gg) = self.evaluate(&x[..p], &x[p..])?;
        g.extend(gg);
        Ok((v, g))
    }

    fn support(&self) -> &SupportTransform {
        &self.support
    }
}
