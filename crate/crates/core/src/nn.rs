//! Dense numeric substrate: row-major matrices, a ReLU multilayer perceptron
//! with hand-written backpropagation, and Adam.
//!
//! Batches are matrices with one example per row. The single-example entry
//! points ([`Mlp::forward`], [`Mlp::backward`]) run the batch code with one row.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{shape_check, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        shape_check("matrix data length", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            shape_check("matrix row length", cols, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn row_vector(v: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: v.len(),
            data: v.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, and a 0-column matrix has no meaningful rows anyway
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// Copy of the selected rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(idx.len(), self.cols);
        for (dst, &src) in idx.iter().enumerate() {
            out.row_mut(dst).copy_from_slice(self.row(src));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..a.len() {
        s += a[j] * b[j];
    }
    s
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One affine layer; `weight` is `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Matrix::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    /// Uniform Glorot initialization, zero bias.
    pub fn glorot<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        let data = (0..input * output).map(|_| dist.sample(rng)).collect();
        Self {
            weight: Matrix {
                rows: output,
                cols: input,
                data,
            },
            bias: vec![0.0; output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows
    }
}

/// Multilayer perceptron: ReLU on hidden layers, linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Activations cached by a batch forward pass; consumed by [`Mlp::backward_batch`].
#[derive(Debug, Clone)]
pub struct MlpTrace {
    /// `inputs[l]` is the input to layer `l`; the last entry is the network output.
    inputs: Vec<Matrix>,
    /// Pre-activation values per layer.
    pre: Vec<Matrix>,
}

impl MlpTrace {
    pub fn output(&self) -> &Matrix {
        self.inputs.last().expect("trace has at least the input")
    }
}

impl Mlp {
    /// `sizes` lists every width from input to output, e.g. `[3, 50, 50, 31]`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(
            sizes.len() >= 2,
            "an MLP needs an input and an output width"
        );
        let layers = sizes
            .windows(2)
            .map(|w| Dense::glorot(w[0], w[1], rng))
            .collect();
        Self { layers }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("MLP with no layers".into()));
        }
        for pair in layers.windows(2) {
            shape_check("layer chaining", pair[0].output_dim(), pair[1].input_dim())?;
        }
        for l in &layers {
            shape_check("bias length", l.output_dim(), l.bias.len())?;
        }
        Ok(Self { layers })
    }

    /// Same shapes, all zeros. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.input_dim(), l.output_dim()))
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::output_dim)
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data.len() + l.bias.len())
            .sum()
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            Activation::Identity
        } else {
            Activation::Relu
        }
    }

    pub fn fill_zero(&mut self) {
        for l in &mut self.layers {
            l.weight.data.fill(0.0);
            l.bias.fill(0.0);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weight.data.iter_mut().for_each(|w| *w *= s);
            l.bias.iter_mut().for_each(|b| *b *= s);
        }
    }

    /// Visit every parameter of `self` together with the matching entry of `other`.
    pub fn zip_params_mut(&mut self, other: &Mlp, mut f: impl FnMut(&mut f64, f64)) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, &y) in a.weight.data.iter_mut().zip(&b.weight.data) {
                f(x, y);
            }
            for (x, &y) in a.bias.iter_mut().zip(&b.bias) {
                f(x, y);
            }
        }
    }

    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weight.data.iter().chain(l.bias.iter()).copied())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.data.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let trace = self.forward_batch(&Matrix::row_vector(input))?;
        Ok(trace.inputs.into_iter().last().expect("output").data)
    }

    pub fn forward_batch(&self, input: &Matrix) -> Result<MlpTrace> {
        shape_check("MLP input width", self.input_dim(), input.cols)?;
        let n = input.rows;
        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        inputs.push(input.clone());
        for (li, layer) in self.layers.iter().enumerate() {
            let act = self.activation(li);
            let x = inputs.last().expect("nonempty");
            let out_dim = layer.output_dim();
            let mut z = Matrix::zeros(n, out_dim);
            for r in 0..n {
                let xr = x.row(r);
                let zr = z.row_mut(r);
                for (o, zo) in zr.iter_mut().enumerate() {
                    *zo = dot(layer.weight.row(o), xr) + layer.bias[o];
                }
            }
            let h = Matrix {
                rows: n,
                cols: out_dim,
                data: z.data.iter().map(|&v| act.apply(v)).collect(),
            };
            pre.push(z);
            inputs.push(h);
        }
        Ok(MlpTrace { inputs, pre })
    }

    /// Gradients of `upstream · output` with respect to all parameters and the input.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<(Mlp, Vec<f64>)> {
        let trace = self.forward_batch(&Matrix::row_vector(input))?;
        let mut grads = self.zeros_like();
        let gin = self.backward_batch(&trace, &Matrix::row_vector(upstream), Some(&mut grads))?;
        Ok((grads, gin.data))
    }

    /// Batch backward pass. Parameter gradients are summed over rows and
    /// *added* to `grads` when given; the returned matrix holds per-row input
    /// gradients.
    pub fn backward_batch(
        &self,
        trace: &MlpTrace,
        upstream: &Matrix,
        mut grads: Option<&mut Mlp>,
    ) -> Result<Matrix> {
        shape_check("upstream width", self.output_dim(), upstream.cols)?;
        shape_check("upstream rows", trace.inputs[0].rows, upstream.rows)?;
        let n = upstream.rows;
        let mut delta = upstream.clone();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let act = self.activation(li);
            if act != Activation::Identity {
                for (d, &z) in delta.data.iter_mut().zip(&trace.pre[li].data) {
                    *d *= act.derivative(z);
                }
            }
            let x = &trace.inputs[li];
            if let Some(g) = grads.as_deref_mut() {
                let gl = &mut g.layers[li];
                for r in 0..n {
                    let dr = delta.row(r);
                    let xr = x.row(r);
                    for (o, &d) in dr.iter().enumerate() {
                        if d != 0.0 {
                            axpy(d, xr, gl.weight.row_mut(o));
                            gl.bias[o] += d;
                        }
                    }
                }
            }
            let mut dx = Matrix::zeros(n, layer.input_dim());
            for r in 0..n {
                let dr = delta.row(r);
                let dxr = dx.row_mut(r);
                for (o, &d) in dr.iter().enumerate() {
                    if d != 0.0 {
                        axpy(d, layer.weight.row(o), dxr);
                    }
                }
            }
            delta = dx;
        }
        Ok(delta)
    }
}

/// Bias-corrected Adam with moment buffers shaped like the parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Mlp,
    pub v: Mlp,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(shape: &Mlp) -> Self {
        Self {
            m: shape.zeros_like(),
            v: shape.zeros_like(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut Mlp, grads: &Mlp, lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Invalid(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        if let Some(bad) = grads.params().find(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!("gradient entry {bad}")));
        }
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        self.m
            .zip_params_mut(grads, |m, g| *m = b1 * *m + (1.0 - b1) * g);
        self.v
            .zip_params_mut(grads, |v, g| *v = b2 * *v + (1.0 - b2) * g * g);
        let updates = params
            .params_mut()
            .zip(self.m.params().zip(self.v.params()));
        for (p, (m, v)) in updates {
            let m_hat = m / c1;
            let v_hat = v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn scalar_net(w: f64) -> Mlp {
        Mlp::from_layers(vec![Dense {
            weight: Matrix::from_vec(1, 1, vec![w]).unwrap(),
            bias: vec![0.0],
        }])
        .unwrap()
    }

    #[test]
    fn zero_net_outputs_zero() {
        let mut rng = substream(1, &[]);
        let mut net = Mlp::new(&[3, 5, 2], &mut rng);
        net.fill_zero();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer() {
        let net = Mlp::from_layers(vec![Dense {
            weight: Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            bias: vec![0.0, 0.0],
        }])
        .unwrap();
        assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn two_layer_matches_hand_rolled_pass() {
        // 1 -> 2 -> 1 with fixed weights
        let net = Mlp::from_layers(vec![
            Dense {
                weight: Matrix::from_vec(2, 1, vec![0.3, -0.7]).unwrap(),
                bias: vec![0.1, 0.2],
            },
            Dense {
                weight: Matrix::from_vec(1, 2, vec![1.5, -0.4]).unwrap(),
                bias: vec![0.05],
            },
        ])
        .unwrap();
        let x = 0.5;
        let h0 = (0.3f64 * x + 0.1).max(0.0);
        let h1 = (-0.7f64 * x + 0.2).max(0.0);
        let expected = 1.5 * h0 - 0.4 * h1 + 0.05;
        let got = net.forward(&[x]).unwrap();
        assert!((got[0] - expected).abs() < 1e-15);
        assert!((got[0] - 0.425).abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let mut rng = substream(2, &[]);
        let net = Mlp::new(&[3, 4, 2], &mut rng);
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape(_))));
        assert!(matches!(
            net.backward(&[1.0, 2.0, 3.0], &[1.0]),
            Err(Error::Shape(_))
        ));
        assert!(Mlp::from_layers(vec![Dense::zeros(2, 3), Dense::zeros(4, 1)]).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = substream(3, &[]);
        let net = Mlp::new(&[3, 6, 6, 2], &mut rng);
        let (g, gin) = net.backward(&[0.3, -0.2, 0.9], &[0.0, 0.0]).unwrap();
        assert!(g.params().all(|v| v == 0.0));
        assert!(gin.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_linear_gradient() {
        let net = scalar_net(2.5);
        let (g, gin) = net.backward(&[0.8], &[1.0]).unwrap();
        assert_eq!(gin, vec![2.5]);
        assert_eq!(g.layers[0].weight.get(0, 0), 0.8);
        assert_eq!(g.layers[0].bias[0], 1.0);
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = substream(4, &[]);
        let net = Mlp::new(&[4, 50, 50, 7], &mut rng);
        let x = [0.1, -0.3, 2.0, 0.7];
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn adam_zero_gradient_is_identity() {
        let mut rng = substream(5, &[]);
        let mut net = Mlp::new(&[2, 3, 1], &mut rng);
        let before = net.clone();
        let mut st = AdamState::new(&net);
        let zero = net.zeros_like();
        st.step(&mut net, &zero, 1e-3).unwrap();
        assert_eq!(net, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut net = scalar_net(0.0);
        let mut g = net.zeros_like();
        g.layers[0].weight.set(0, 0, 1.0);
        let mut st = AdamState::new(&net);
        st.step(&mut net, &g, 0.1).unwrap();
        // m_hat = 1, v_hat = 1 -> update = lr / (1 + eps)
        let w = net.layers[0].weight.get(0, 0);
        assert!((w + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn adam_matches_reference_scalar_trajectory() {
        // independent scalar Adam
        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8f64, 0.05f64);
        let grads = [0.7, -1.3];
        let (mut p, mut m, mut v) = (0.4f64, 0.0f64, 0.0f64);
        for (t, g) in grads.iter().enumerate() {
            let t = (t + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            p -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
        }

        let mut net = scalar_net(0.4);
        let mut st = AdamState::new(&net);
        for g in grads {
            let mut gm = net.zeros_like();
            gm.layers[0].weight.set(0, 0, g);
            st.step(&mut net, &gm, lr).unwrap();
        }
        assert!((net.layers[0].weight.get(0, 0) - p).abs() < 1e-15);
        assert_eq!(st.step, 2);
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut net = scalar_net(0.0);
        let mut g = net.zeros_like();
        g.layers[0].bias[0] = f64::NAN;
        let mut st = AdamState::new(&net);
        assert!(matches!(st.step(&mut net, &g, 0.1), Err(Error::Numeric(_))));
    }
}
