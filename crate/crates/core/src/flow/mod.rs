//! Conditional neural spline flow `q(x | θ)`.
//!
//! Density evaluation runs data → base: each coupling layer leaves half of
//! the coordinates untouched, feeds them (with the context) to an MLP, and
//! pushes the other half through rational-quadratic splines parameterized
//! by the MLP output. Sampling runs the layers backwards with the spline
//! inverse.

mod checkpoint;
pub mod spline;
mod train;

pub use checkpoint::{
    decode_flow, encode_flow, read_flow, write_flow, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use spline::{rqs_forward, rqs_inverse, RqsParams};
pub use train::{train_flow, TrainConfig, TrainReport};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{shape_check, Error, Result};
use crate::nn::{Matrix, Mlp, MlpTrace};
use spline::{raw_len, RawSpline};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub layers: usize,
    pub hidden: usize,
    pub bins: usize,
    pub bound: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            layers: 5,
            hidden: 50,
            bins: 10,
            bound: 5.0,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0
            || self.hidden == 0
            || self.bins == 0
            || !(self.bound > 0.0 && self.bound.is_finite())
        {
            return Err(Error::Invalid(format!(
                "invalid flow architecture {self:?}"
            )));
        }
        Ok(())
    }
}

/// One coupling layer. `conditioner` maps `[x[identity], θ]` to
/// `transformed.len() * (3K + 1)` raw spline parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingLayer {
    pub transformed: Vec<usize>,
    pub identity: Vec<usize>,
    pub conditioner: Mlp,
}

/// Even indices are transformed in even layers, odd indices in odd layers.
/// A one-dimensional summary is transformed by every layer.
pub fn coupling_mask(summary_dim: usize, layer: usize) -> (Vec<usize>, Vec<usize>) {
    if summary_dim == 1 {
        return (vec![0], vec![]);
    }
    (0..summary_dim).partition(|i| i % 2 == layer % 2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    summary_dim: usize,
    context_dim: usize,
    bins: usize,
    bound: f64,
    layers: Vec<CouplingLayer>,
}

/// Per-layer parameter gradients, shaped like the conditioners.
pub type FlowGrads = Vec<Mlp>;

struct LayerCache {
    trace: MlpTrace,
    /// Per row and transformed dim: (dy/dx, dlog_slope/dx).
    dx: Vec<(f64, f64)>,
    /// Per row: raw gradients of y and log-slope, laid out like the MLP output.
    dy_draw: Matrix,
    dls_draw: Matrix,
}

impl Flow {
    /// Glorot-initialized conditioners.
    pub fn new<R: Rng + ?Sized>(
        summary_dim: usize,
        context_dim: usize,
        cfg: &FlowConfig,
        rng: &mut R,
    ) -> Result<Self> {
        Self::build(summary_dim, context_dim, cfg, |sizes| Mlp::new(sizes, rng))
    }

    /// All conditioner weights zero: every spline is the identity, so the
    /// flow density is the standard normal.
    pub fn identity(summary_dim: usize, context_dim: usize, cfg: &FlowConfig) -> Result<Self> {
        Self::build(summary_dim, context_dim, cfg, |sizes| {
            let mut rng = crate::rng::substream(0, &[]);
            let mut m = Mlp::new(sizes, &mut rng);
            m.fill_zero();
            m
        })
    }

    fn build(
        summary_dim: usize,
        context_dim: usize,
        cfg: &FlowConfig,
        mut make: impl FnMut(&[usize]) -> Mlp,
    ) -> Result<Self> {
        if summary_dim == 0 || context_dim == 0 {
            return Err(Error::Invalid(
                "flow needs summary_dim >= 1 and context_dim >= 1".into(),
            ));
        }
        if cfg.layers == 0 || cfg.bins == 0 || cfg.hidden == 0 || !(cfg.bound > 0.0) {
            return Err(Error::Invalid(format!("bad flow config {cfg:?}")));
        }
        let layers = (0..cfg.layers)
            .map(|l| {
                let (transformed, identity) = coupling_mask(summary_dim, l);
                let sizes = [
                    identity.len() + context_dim,
                    cfg.hidden,
                    cfg.hidden,
                    transformed.len() * raw_len(cfg.bins),
                ];
                CouplingLayer {
                    conditioner: make(&sizes),
                    transformed,
                    identity,
                }
            })
            .collect();
        Ok(Self {
            summary_dim,
            context_dim,
            bins: cfg.bins,
            bound: cfg.bound,
            layers,
        })
    }

    /// Assemble from parts, checking that masks and conditioner shapes agree.
    pub fn from_parts(
        summary_dim: usize,
        context_dim: usize,
        bins: usize,
        bound: f64,
        layers: Vec<CouplingLayer>,
    ) -> Result<Self> {
        if summary_dim == 0 || context_dim == 0 || bins == 0 || layers.is_empty() {
            return Err(Error::Invalid("empty flow dimensions".into()));
        }
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::Invalid(format!("flow bound {bound}")));
        }
        for (l, layer) in layers.iter().enumerate() {
            let (tr, id) = coupling_mask(summary_dim, l);
            if tr != layer.transformed || id != layer.identity {
                return Err(Error::Invalid(format!(
                    "layer {l} mask does not match the alternating scheme"
                )));
            }
            shape_check(
                "conditioner input",
                id.len() + context_dim,
                layer.conditioner.input_dim(),
            )?;
            shape_check(
                "conditioner output",
                tr.len() * raw_len(bins),
                layer.conditioner.output_dim(),
            )?;
        }
        Ok(Self {
            summary_dim,
            context_dim,
            bins,
            bound,
            layers,
        })
    }

    pub fn summary_dim(&self) -> usize {
        self.summary_dim
    }

    pub fn context_dim(&self) -> usize {
        self.context_dim
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn layers(&self) -> &[CouplingLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [CouplingLayer] {
        &mut self.layers
    }

    pub fn zero_grads(&self) -> FlowGrads {
        self.layers
            .iter()
            .map(|l| l.conditioner.zeros_like())
            .collect()
    }

    fn check(&self, x: &[f64], ctx: &[f64]) -> Result<()> {
        shape_check("summary length", self.summary_dim, x.len())?;
        shape_check("context length", self.context_dim, ctx.len())?;
        if x.iter().chain(ctx).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("flow input".into()));
        }
        Ok(())
    }

    fn conditioner_input(layer: &CouplingLayer, u: &Matrix, ctx: &Matrix) -> Matrix {
        let n = u.rows();
        let width = layer.identity.len() + ctx.cols();
        let mut c = Matrix::zeros(n, width);
        for r in 0..n {
            let ur = u.row(r);
            let cr = c.row_mut(r);
            for (slot, &i) in cr.iter_mut().zip(&layer.identity) {
                *slot = ur[i];
            }
            cr[layer.identity.len()..].copy_from_slice(ctx.row(r));
        }
        c
    }

    /// Map data to base space: returns `z` and `log |det dz/dx|` per row.
    pub fn forward_batch(&self, x: &Matrix, ctx: &Matrix) -> Result<(Matrix, Vec<f64>)> {
        self.check_batch(x, ctx)?;
        let rl = raw_len(self.bins);
        let mut u = x.clone();
        let mut ld = vec![0.0; x.rows()];
        for layer in &self.layers {
            let trace = layer
                .conditioner
                .forward_batch(&Self::conditioner_input(layer, &u, ctx))?;
            let raw = trace.output();
            for r in 0..u.rows() {
                let rr = raw.row(r);
                let ur = u.row_mut(r);
                for (t, &j) in layer.transformed.iter().enumerate() {
                    let s = RawSpline::new(&rr[t * rl..(t + 1) * rl], self.bins, self.bound)?;
                    let (y, ls) = s.eval(ur[j]);
                    ur[j] = y;
                    ld[r] += ls;
                }
            }
        }
        Ok((u, ld))
    }

    fn check_batch(&self, x: &Matrix, ctx: &Matrix) -> Result<()> {
        shape_check("summary width", self.summary_dim, x.cols())?;
        shape_check("context width", self.context_dim, ctx.cols())?;
        shape_check("context rows", x.rows(), ctx.rows())?;
        if !x.is_finite() || !ctx.is_finite() {
            return Err(Error::Numeric("flow batch input".into()));
        }
        Ok(())
    }

    pub fn log_prob_batch(&self, x: &Matrix, ctx: &Matrix) -> Result<Vec<f64>> {
        let (z, ld) = self.forward_batch(x, ctx)?;
        Ok(z.iter_rows()
            .zip(ld)
            .map(|(zr, l)| std_normal_logpdf(zr) + l)
            .collect())
    }

    pub fn log_prob(&self, x: &[f64], ctx: &[f64]) -> Result<f64> {
        self.check(x, ctx)?;
        let lp = self.log_prob_batch(&Matrix::row_vector(x), &Matrix::row_vector(ctx))?;
        Ok(lp[0])
    }

    /// Log-density and its gradients with respect to the summary and the context.
    pub fn log_prob_grad(&self, x: &[f64], ctx: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        self.check(x, ctx)?;
        let (lp, gx, gc) =
            self.backprop(&Matrix::row_vector(x), &Matrix::row_vector(ctx), 1.0, None)?;
        Ok((lp[0], gx.into_data(), gc.into_data()))
    }

    /// Mean negative log-likelihood over the batch; adds its parameter
    /// gradients into `grads`.
    pub fn nll_grad(&self, x: &Matrix, ctx: &Matrix, grads: &mut FlowGrads) -> Result<f64> {
        self.check_batch(x, ctx)?;
        let n = x.rows();
        if n == 0 {
            return Err(Error::Invalid("empty batch".into()));
        }
        let (lp, _, _) = self.backprop(x, ctx, -1.0 / n as f64, Some(grads))?;
        Ok(-lp.iter().sum::<f64>() / n as f64)
    }

    /// Reverse-mode pass for the objective `coef * Σ_rows log q(x_r | θ_r)`.
    /// Returns per-row log-densities and the input/context gradients of the objective.
    fn backprop(
        &self,
        x: &Matrix,
        ctx: &Matrix,
        coef: f64,
        mut grads: Option<&mut FlowGrads>,
    ) -> Result<(Vec<f64>, Matrix, Matrix)> {
        let n = x.rows();
        let rl = raw_len(self.bins);
        let mut u = x.clone();
        let mut ld = vec![0.0; n];
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut dy_buf = vec![0.0; rl];
        let mut dls_buf = vec![0.0; rl];
        for layer in &self.layers {
            let trace = layer
                .conditioner
                .forward_batch(&Self::conditioner_input(layer, &u, ctx))?;
            let out_w = layer.conditioner.output_dim();
            let mut dy_draw = Matrix::zeros(n, out_w);
            let mut dls_draw = Matrix::zeros(n, out_w);
            let mut dx = Vec::with_capacity(n * layer.transformed.len());
            {
                let raw = trace.output();
                for r in 0..n {
                    let rr = raw.row(r);
                    let ur = u.row_mut(r);
                    for (t, &j) in layer.transformed.iter().enumerate() {
                        let block = t * rl..(t + 1) * rl;
                        let s = RawSpline::new(&rr[block.clone()], self.bins, self.bound)?;
                        let ev = s.eval_with_grads(ur[j], &mut dy_buf, &mut dls_buf);
                        ur[j] = ev.y;
                        ld[r] += ev.log_slope;
                        dx.push((ev.dy_dx, ev.dlog_slope_dx));
                        dy_draw.row_mut(r)[block.clone()].copy_from_slice(&dy_buf);
                        dls_draw.row_mut(r)[block].copy_from_slice(&dls_buf);
                    }
                }
            }
            caches.push(LayerCache {
                trace,
                dx,
                dy_draw,
                dls_draw,
            });
        }

        let lp: Vec<f64> = u
            .iter_rows()
            .zip(&ld)
            .map(|(zr, l)| std_normal_logpdf(zr) + l)
            .collect();

        // gradient of the objective w.r.t. the current layer output
        let mut g = u;
        g.data_mut().iter_mut().for_each(|z| *z *= -coef);
        let mut g_ctx = Matrix::zeros(n, self.context_dim);

        for (li, layer) in self.layers.iter().enumerate().rev() {
            let cache = &caches[li];
            let nt = layer.transformed.len();
            let mut upstream = Matrix::zeros(n, layer.conditioner.output_dim());
            for r in 0..n {
                let gr = g.row_mut(r);
                let up = upstream.row_mut(r);
                let dyr = cache.dy_draw.row(r);
                let dlr = cache.dls_draw.row(r);
                for (t, &j) in layer.transformed.iter().enumerate() {
                    let go = gr[j];
                    for k in t * rl..(t + 1) * rl {
                        up[k] = go * dyr[k] + coef * dlr[k];
                    }
                    let (dydx, dlsdx) = cache.dx[r * nt + t];
                    gr[j] = go * dydx + coef * dlsdx;
                }
            }
            let gc = layer.conditioner.backward_batch(
                &cache.trace,
                &upstream,
                grads.as_deref_mut().map(|g| &mut g[li]),
            )?;
            let nid = layer.identity.len();
            for r in 0..n {
                let gcr = gc.row(r);
                let gr = g.row_mut(r);
                for (k, &i) in layer.identity.iter().enumerate() {
                    gr[i] += gcr[k];
                }
                for (a, &b) in g_ctx.row_mut(r).iter_mut().zip(&gcr[nid..]) {
                    *a += b;
                }
            }
        }
        Ok((lp, g, g_ctx))
    }

    /// Map base points back to data space.
    pub fn inverse_batch(&self, z: &Matrix, ctx: &Matrix) -> Result<Matrix> {
        self.check_batch(z, ctx)?;
        let rl = raw_len(self.bins);
        let mut u = z.clone();
        for layer in self.layers.iter().rev() {
            // identity coordinates are unchanged by this layer, so the
            // conditioner input is available from its output side
            let trace = layer
                .conditioner
                .forward_batch(&Self::conditioner_input(layer, &u, ctx))?;
            let raw = trace.output();
            for r in 0..u.rows() {
                let rr = raw.row(r);
                let ur = u.row_mut(r);
                for (t, &j) in layer.transformed.iter().enumerate() {
                    let p = RqsParams::from_raw(&rr[t * rl..(t + 1) * rl], self.bins, self.bound)?;
                    ur[j] = rqs_inverse(ur[j], &p)?.0;
                }
            }
        }
        Ok(u)
    }

    /// `n` draws from `q(· | ctx)`.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        ctx: &[f64],
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<Vec<f64>>> {
        shape_check("context length", self.context_dim, ctx.len())?;
        if n == 0 {
            return Err(Error::Invalid("sample count must be at least 1".into()));
        }
        let z: Vec<f64> = (0..n * self.summary_dim)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let z = Matrix::from_vec(n, self.summary_dim, z)?;
        let c = Matrix::from_vec(n, self.context_dim, ctx.repeat(n))?;
        let x = self.inverse_batch(&z, &c)?;
        Ok(x.iter_rows().map(<[f64]>::to_vec).collect())
    }
}

pub(crate) fn std_normal_logpdf(z: &[f64]) -> f64 {
    -0.5 * z.iter().map(|v| v * v).sum::<f64>() - z.len() as f64 * LN_SQRT_2PI
}
