//! Monotone rational-quadratic spline on `[-B, B]` with identity tails.
//!
//! Knots are placed by `K` bin widths and heights (each summing to `2B`) and
//! `K + 1` knot derivatives, the two boundary derivatives being pinned to 1 so
//! the map joins the identity tails with a continuous slope.
//!
//! [`RawSpline`] evaluates the spline directly from the unconstrained
//! conditioner outputs and also returns the derivatives of both the output
//! and the log-slope with respect to the input and every raw parameter. Those
//! adjoints are what flow training and the NUTS gradients are built on.

use crate::error::{Error, Result};

/// Minimum bin width/height as a fraction of the interval.
pub const MIN_BIN: f64 = 1e-3;
/// Lower bound added to interior knot derivatives.
pub const MIN_DERIVATIVE: f64 = 1e-3;

/// Raw conditioner outputs needed per transformed dimension.
pub const fn raw_len(bins: usize) -> usize {
    3 * bins + 1
}

/// Softplus offset making a zero raw derivative map to slope exactly 1.
fn derivative_offset() -> f64 {
    ((1.0 - MIN_DERIVATIVE).exp() - 1.0).ln()
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax(raw: &[f64], out: &mut [f64]) {
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &r) in out.iter_mut().zip(raw) {
        *o = (r - max).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
}

/// Validated spline parameters in constrained form.
#[derive(Debug, Clone, PartialEq)]
pub struct RqsParams {
    widths: Vec<f64>,
    heights: Vec<f64>,
    derivatives: Vec<f64>,
    bound: f64,
}

impl RqsParams {
    pub fn new(
        widths: Vec<f64>,
        heights: Vec<f64>,
        derivatives: Vec<f64>,
        bound: f64,
    ) -> Result<Self> {
        let k = widths.len();
        if k == 0 || heights.len() != k || derivatives.len() != k + 1 {
            return Err(Error::Shape(format!(
                "spline needs K widths, K heights and K+1 derivatives (got {}, {}, {})",
                widths.len(),
                heights.len(),
                derivatives.len()
            )));
        }
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::Invalid(format!(
                "spline bound must be positive, got {bound}"
            )));
        }
        let span = 2.0 * bound;
        for (name, v) in [("widths", &widths), ("heights", &heights)] {
            if v.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
                return Err(Error::Invalid(format!("spline {name} must be positive")));
            }
            let total: f64 = v.iter().sum();
            if (total - span).abs() > 1e-9 * span {
                return Err(Error::Invalid(format!(
                    "spline {name} sum to {total}, expected {span}"
                )));
            }
        }
        if derivatives.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(Error::Invalid("spline derivatives must be positive".into()));
        }
        if derivatives[0] != 1.0 || derivatives[k] != 1.0 {
            return Err(Error::Invalid("boundary derivatives must equal 1".into()));
        }
        Ok(Self {
            widths,
            heights,
            derivatives,
            bound,
        })
    }

    /// Uniform bins, unit slopes: the identity on `[-B, B]`.
    pub fn identity(bins: usize, bound: f64) -> Self {
        let w = 2.0 * bound / bins as f64;
        Self {
            widths: vec![w; bins],
            heights: vec![w; bins],
            derivatives: vec![1.0; bins + 1],
            bound,
        }
    }

    pub fn from_raw(raw: &[f64], bins: usize, bound: f64) -> Result<Self> {
        let s = RawSpline::new(raw, bins, bound)?;
        Ok(Self {
            widths: s.widths,
            heights: s.heights,
            derivatives: s.derivs,
            bound,
        })
    }

    pub fn bins(&self) -> usize {
        self.widths.len()
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    fn knots(values: &[f64], bound: f64) -> Vec<f64> {
        let mut k = Vec::with_capacity(values.len() + 1);
        let mut acc = -bound;
        k.push(acc);
        for &v in values {
            acc += v;
            k.push(acc);
        }
        *k.last_mut().expect("nonempty") = bound;
        k
    }
}

fn find_bin(knots: &[f64], x: f64) -> usize {
    // largest k with knots[k] <= x, clamped to the last bin
    let k = knots.partition_point(|&v| v <= x);
    k.saturating_sub(1).min(knots.len() - 2)
}

/// Evaluate one rational-quadratic segment.
/// Returns `(y - y_k, dy/dx)` in terms of the bin-local quantities.
#[inline]
fn segment(xi: f64, s: f64, h: f64, d0: f64, d1: f64) -> (f64, f64) {
    let q = xi * (1.0 - xi);
    let den = s + (d1 + d0 - 2.0 * s) * q;
    let num = h * (s * xi * xi + d0 * q);
    let slope = s * s * (d1 * xi * xi + 2.0 * s * q + d0 * (1.0 - xi) * (1.0 - xi)) / (den * den);
    (num / den, slope)
}

/// Forward map `x -> y` with log |dy/dx|. Identity outside `[-B, B]`.
pub fn rqs_forward(x: f64, p: &RqsParams) -> Result<(f64, f64)> {
    if !x.is_finite() {
        return Err(Error::Numeric(format!("spline input {x}")));
    }
    if x <= -p.bound || x >= p.bound {
        return Ok((x, 0.0));
    }
    let xk = RqsParams::knots(&p.widths, p.bound);
    let yk = RqsParams::knots(&p.heights, p.bound);
    let k = find_bin(&xk, x);
    let w = p.widths[k];
    let h = p.heights[k];
    let xi = ((x - xk[k]) / w).clamp(0.0, 1.0);
    let (dy, slope) = segment(xi, h / w, h, p.derivatives[k], p.derivatives[k + 1]);
    Ok((yk[k] + dy, slope.ln()))
}

/// Inverse map `y -> x` with log |dx/dy| (the negated forward log-slope).
pub fn rqs_inverse(y: f64, p: &RqsParams) -> Result<(f64, f64)> {
    if !y.is_finite() {
        return Err(Error::Numeric(format!("spline input {y}")));
    }
    if y <= -p.bound || y >= p.bound {
        return Ok((y, 0.0));
    }
    let xk = RqsParams::knots(&p.widths, p.bound);
    let yk = RqsParams::knots(&p.heights, p.bound);
    let k = find_bin(&yk, y);
    let w = p.widths[k];
    let h = p.heights[k];
    let s = h / w;
    let (d0, d1) = (p.derivatives[k], p.derivatives[k + 1]);
    let dy = y - yk[k];
    let c2 = d1 + d0 - 2.0 * s;
    let a = h * (s - d0) + dy * c2;
    let b = h * d0 - dy * c2;
    let c = -s * dy;
    let disc = (b * b - 4.0 * a * c).max(0.0);
    let xi = ((2.0 * c) / (-b - disc.sqrt())).clamp(0.0, 1.0);
    let x = xk[k] + xi * w;
    let (_, slope) = segment(xi, s, h, d0, d1);
    Ok((x, -slope.ln()))
}

/// Spline built straight from raw conditioner outputs, keeping what the
/// adjoint computation needs.
#[derive(Debug, Clone)]
pub struct RawSpline {
    bins: usize,
    bound: f64,
    softmax_w: Vec<f64>,
    softmax_h: Vec<f64>,
    widths: Vec<f64>,
    heights: Vec<f64>,
    derivs: Vec<f64>,
    /// d derivative / d raw for the interior knots (boundary entries unused).
    deriv_slope: Vec<f64>,
    xk: Vec<f64>,
    yk: Vec<f64>,
}

/// Value and first derivatives of the spline at one point.
#[derive(Debug, Clone, Copy, Default)]
pub struct SplineEval {
    pub y: f64,
    pub log_slope: f64,
    pub dy_dx: f64,
    pub dlog_slope_dx: f64,
}

impl RawSpline {
    pub fn new(raw: &[f64], bins: usize, bound: f64) -> Result<Self> {
        if raw.len() != raw_len(bins) {
            return Err(Error::Shape(format!(
                "raw spline parameters: expected {}, got {}",
                raw_len(bins),
                raw.len()
            )));
        }
        if let Some(bad) = raw.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("raw spline parameter {bad}")));
        }
        let span = 2.0 * bound;
        let scale = span * (1.0 - bins as f64 * MIN_BIN);
        let mut softmax_w = vec![0.0; bins];
        let mut softmax_h = vec![0.0; bins];
        softmax(&raw[..bins], &mut softmax_w);
        softmax(&raw[bins..2 * bins], &mut softmax_h);
        let widths: Vec<f64> = softmax_w
            .iter()
            .map(|&s| span * MIN_BIN + scale * s)
            .collect();
        let heights: Vec<f64> = softmax_h
            .iter()
            .map(|&s| span * MIN_BIN + scale * s)
            .collect();
        let off = derivative_offset();
        let mut derivs = vec![1.0; bins + 1];
        let mut deriv_slope = vec![0.0; bins + 1];
        for k in 1..bins {
            let r = raw[2 * bins + k] + off;
            derivs[k] = MIN_DERIVATIVE + softplus(r);
            deriv_slope[k] = sigmoid(r);
        }
        let xk = RqsParams::knots(&widths, bound);
        let yk = RqsParams::knots(&heights, bound);
        Ok(Self {
            bins,
            bound,
            softmax_w,
            softmax_h,
            widths,
            heights,
            derivs,
            deriv_slope,
            xk,
            yk,
        })
    }

    pub fn params(&self) -> RqsParams {
        RqsParams {
            widths: self.widths.clone(),
            heights: self.heights.clone(),
            derivatives: self.derivs.clone(),
            bound: self.bound,
        }
    }

    /// Forward value and log-slope only.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        if x <= -self.bound || x >= self.bound {
            return (x, 0.0);
        }
        let k = find_bin(&self.xk, x);
        let w = self.widths[k];
        let h = self.heights[k];
        let xi = ((x - self.xk[k]) / w).clamp(0.0, 1.0);
        let (dy, slope) = segment(xi, h / w, h, self.derivs[k], self.derivs[k + 1]);
        (self.yk[k] + dy, slope.ln())
    }

    /// Forward evaluation plus derivatives with respect to `x` and the raw
    /// parameters. `dy_draw` and `dls_draw` (length `3K+1`) are overwritten.
    pub fn eval_with_grads(&self, x: f64, dy_draw: &mut [f64], dls_draw: &mut [f64]) -> SplineEval {
        dy_draw.fill(0.0);
        dls_draw.fill(0.0);
        if x <= -self.bound || x >= self.bound {
            return SplineEval {
                y: x,
                log_slope: 0.0,
                dy_dx: 1.0,
                dlog_slope_dx: 0.0,
            };
        }
        let kb = self.bins;
        let k = find_bin(&self.xk, x);
        let w = self.widths[k];
        let h = self.heights[k];
        let s = h / w;
        let (d0, d1) = (self.derivs[k], self.derivs[k + 1]);
        let xi = ((x - self.xk[k]) / w).clamp(0.0, 1.0);

        let q = xi * (1.0 - xi);
        let dq = 1.0 - 2.0 * xi;
        let c2 = d1 + d0 - 2.0 * s;
        let den = s + c2 * q;
        let num = s * xi * xi + d0 * q;
        let m = d1 * xi * xi + 2.0 * s * q + d0 * (1.0 - xi) * (1.0 - xi);

        let y = self.yk[k] + h * num / den;
        let slope = s * s * m / (den * den);
        let log_slope = slope.ln();

        // partials of num, den, m w.r.t. (xi, s, d0, d1)
        let num_xi = 2.0 * s * xi + d0 * dq;
        let num_s = xi * xi;
        let num_d0 = q;
        let den_xi = c2 * dq;
        let den_s = 1.0 - 2.0 * q;
        let den_d = q;
        let m_xi = 2.0 * d1 * xi + 2.0 * s * dq - 2.0 * d0 * (1.0 - xi);
        let m_s = 2.0 * q;
        let m_d0 = (1.0 - xi) * (1.0 - xi);
        let m_d1 = xi * xi;

        let den2 = den * den;
        let y_xi = h * (num_xi * den - num * den_xi) / den2;
        let y_s = h * (num_s * den - num * den_s) / den2;
        let y_d0 = h * (num_d0 * den - num * den_d) / den2;
        let y_d1 = h * (-num * den_d) / den2;
        let y_h = num / den;

        let ls_xi = m_xi / m - 2.0 * den_xi / den;
        let ls_s = 2.0 / s + m_s / m - 2.0 * den_s / den;
        let ls_d0 = m_d0 / m - 2.0 * den_d / den;
        let ls_d1 = m_d1 / m - 2.0 * den_d / den;

        // chain to (w_k, h_k, knot positions) then to every width/height
        let mut gw_y = vec![0.0; kb];
        let mut gh_y = vec![0.0; kb];
        let mut gw_ls = vec![0.0; kb];
        let mut gh_ls = vec![0.0; kb];

        gw_y[k] += -y_xi * xi / w - y_s * s / w;
        gh_y[k] += y_h + y_s / w;
        gw_ls[k] += -ls_xi * xi / w - ls_s * s / w;
        gh_ls[k] += ls_s / w;
        // x_k = -B + sum_{i<k} w_i, y_k = -B + sum_{i<k} h_i
        for i in 0..k {
            gw_y[i] += -y_xi / w;
            gw_ls[i] += -ls_xi / w;
            gh_y[i] += 1.0;
        }

        let scale = 2.0 * self.bound * (1.0 - kb as f64 * MIN_BIN);
        softmax_backward(&self.softmax_w, &gw_y, scale, &mut dy_draw[..kb]);
        softmax_backward(&self.softmax_h, &gh_y, scale, &mut dy_draw[kb..2 * kb]);
        softmax_backward(&self.softmax_w, &gw_ls, scale, &mut dls_draw[..kb]);
        softmax_backward(&self.softmax_h, &gh_ls, scale, &mut dls_draw[kb..2 * kb]);

        let base = 2 * kb;
        if k > 0 {
            dy_draw[base + k] = y_d0 * self.deriv_slope[k];
            dls_draw[base + k] = ls_d0 * self.deriv_slope[k];
        }
        if k + 1 < kb {
            dy_draw[base + k + 1] = y_d1 * self.deriv_slope[k + 1];
            dls_draw[base + k + 1] = ls_d1 * self.deriv_slope[k + 1];
        }

        SplineEval {
            y,
            log_slope,
            dy_dx: slope,
            dlog_slope_dx: ls_xi / w,
        }
    }
}

/// `out_j = scale * sm_j * (g_j - sum_i g_i sm_i)`.
fn softmax_backward(sm: &[f64], g: &[f64], scale: f64, out: &mut [f64]) {
    let inner: f64 = sm.iter().zip(g).map(|(s, g)| s * g).sum();
    for ((o, &s), &gj) in out.iter_mut().zip(sm).zip(g) {
        *o = scale * s * (gj - inner);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;

    fn fixed_params() -> RqsParams {
        // 10 bins over [-5, 5], non-uniform
        let widths = vec![0.5, 1.5, 1.0, 0.8, 1.2, 0.6, 1.4, 0.9, 1.1, 1.0];
        let heights = vec![1.2, 0.6, 0.9, 1.3, 0.7, 1.1, 0.8, 1.0, 1.4, 1.0];
        let derivatives = vec![1.0, 0.5, 2.0, 1.3, 0.7, 1.8, 0.9, 1.1, 2.5, 0.6, 1.0];
        RqsParams::new(widths, heights, derivatives, 5.0).unwrap()
    }

    /// Direct closed-form evaluation of the segment containing x = 0.4,
    /// written out independently of `segment`.
    fn oracle_at_0_4() -> (f64, f64) {
        // knots: -5, -4.5, -3.0, -2.0, -1.2, 0.0, 0.6, ... -> x = 0.4 is in bin 5 [0.0, 0.6)
        // heights cumsum: -5, -3.8, -3.2, -2.3, -1.0, -0.3, 0.8 -> y_k = -0.3, h = 1.1
        let (xk, w, yk, h, d0, d1) = (0.0f64, 0.6f64, -0.3f64, 1.1f64, 1.8f64, 0.9f64);
        let x = 0.4f64;
        let t = (x - xk) / w;
        let s = h / w;
        let y = yk
            + (h * (s * t.powi(2) + d0 * t * (1.0 - t)))
                / (s + (d0 + d1 - 2.0 * s) * t * (1.0 - t));
        let deriv = s.powi(2) * (d1 * t.powi(2) + 2.0 * s * t * (1.0 - t) + d0 * (1.0 - t).powi(2))
            / (s + (d0 + d1 - 2.0 * s) * t * (1.0 - t)).powi(2);
        (y, deriv.ln())
    }

    #[test]
    fn tails_are_identity() {
        let p = fixed_params();
        assert_eq!(rqs_forward(7.3, &p).unwrap(), (7.3, 0.0));
        assert_eq!(rqs_inverse(-12.0, &p).unwrap(), (-12.0, 0.0));
        assert_eq!(rqs_inverse(5.0, &p).unwrap(), (5.0, 0.0));
    }

    #[test]
    fn uniform_unit_slopes_is_identity() {
        let p = RqsParams::identity(10, 5.0);
        for i in 0..=200 {
            let x = -5.0 + 10.0 * i as f64 / 200.0;
            let (y, ld) = rqs_forward(x, &p).unwrap();
            assert!((y - x).abs() < 1e-12, "{x} -> {y}");
            assert!(ld.abs() < 1e-12);
        }
    }

    #[test]
    fn matches_closed_form_segment() {
        let (y_expected, ld_expected) = oracle_at_0_4();
        let p = fixed_params();
        let (y, ld) = rqs_forward(0.4, &p).unwrap();
        assert!((y - y_expected).abs() < 1e-12);
        assert!((ld - ld_expected).abs() < 1e-12);
        let (x, ldi) = rqs_inverse(y_expected, &p).unwrap();
        assert!((x - 0.4).abs() < 1e-8);
        assert!((ldi + ld_expected).abs() < 1e-8);
    }

    #[test]
    fn round_trip_random_points() {
        let p = fixed_params();
        let mut rng = substream(11, &[]);
        for _ in 0..1000 {
            let x: f64 = rng.random_range(-5.0..5.0);
            let (y, ld) = rqs_forward(x, &p).unwrap();
            let (xr, ldi) = rqs_inverse(y, &p).unwrap();
            assert!((xr - x).abs() <= 1e-8);
            assert!((ld + ldi).abs() <= 1e-8);
        }
    }

    #[test]
    fn strictly_increasing_on_grid() {
        let p = fixed_params();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=10_000 {
            let x = -5.5 + 11.0 * i as f64 / 10_000.0;
            let (y, _) = rqs_forward(x, &p).unwrap();
            assert!(y > prev);
            prev = y;
        }
    }

    #[test]
    fn rejects_non_finite_and_bad_params() {
        let p = fixed_params();
        assert!(matches!(rqs_forward(f64::NAN, &p), Err(Error::Numeric(_))));
        assert!(matches!(
            rqs_inverse(f64::INFINITY, &p),
            Err(Error::Numeric(_))
        ));
        assert!(RqsParams::new(vec![5.0, 5.0], vec![5.0, 5.0], vec![1.0, 1.0, 1.0], 5.0).is_ok());
        assert!(RqsParams::new(vec![4.0, 5.0], vec![5.0, 5.0], vec![1.0, 1.0, 1.0], 5.0).is_err());
        assert!(RqsParams::new(vec![5.0, 5.0], vec![5.0, 5.0], vec![1.0, -1.0, 1.0], 5.0).is_err());
        assert!(RqsParams::new(vec![5.0, 5.0], vec![5.0, 5.0], vec![2.0, 1.0, 1.0], 5.0).is_err());
    }

    #[test]
    fn zero_raw_is_identity() {
        let raw = vec![0.0; raw_len(10)];
        let p = RqsParams::from_raw(&raw, 10, 5.0).unwrap();
        for x in [-4.9, -1.0, 0.0, 0.3, 4.2] {
            let (y, ld) = rqs_forward(x, &p).unwrap();
            assert!((y - x).abs() < 1e-12);
            assert!(ld.abs() < 1e-12);
        }
    }

    #[test]
    fn raw_gradients_match_finite_differences() {
        let bins = 10;
        let mut rng = substream(12, &[]);
        for trial in 0..50 {
            let raw: Vec<f64> = (0..raw_len(bins))
                .map(|_| rng.random_range(-2.0..2.0))
                .collect();
            let x: f64 = rng.random_range(-4.9..4.9);
            let s = RawSpline::new(&raw, bins, 5.0).unwrap();
            let mut dy = vec![0.0; raw_len(bins)];
            let mut dls = vec![0.0; raw_len(bins)];
            let ev = s.eval_with_grads(x, &mut dy, &mut dls);

            let (y_ref, ls_ref) = rqs_forward(x, &s.params()).unwrap();
            assert!((ev.y - y_ref).abs() < 1e-12);
            assert!((ev.log_slope - ls_ref).abs() < 1e-12);

            let eps = 1e-6;
            let f = |raw: &[f64], x: f64| {
                rqs_forward(x, &RqsParams::from_raw(raw, bins, 5.0).unwrap()).unwrap()
            };
            let (yp, lp) = f(&raw, x + eps);
            let (ym, lm) = f(&raw, x - eps);
            assert!(
                ((yp - ym) / (2.0 * eps) - ev.dy_dx).abs() < 1e-6 * (1.0 + ev.dy_dx.abs()),
                "trial {trial}"
            );
            assert!(
                ((lp - lm) / (2.0 * eps) - ev.dlog_slope_dx).abs()
                    < 1e-5 * (1.0 + ev.dlog_slope_dx.abs())
            );
            for j in 0..raw.len() {
                let mut rp = raw.clone();
                rp[j] += eps;
                let mut rm = raw.clone();
                rm[j] -= eps;
                let (yp, lp) = f(&rp, x);
                let (ym, lm) = f(&rm, x);
                let fd_y = (yp - ym) / (2.0 * eps);
                let fd_l = (lp - lm) / (2.0 * eps);
                assert!(
                    (fd_y - dy[j]).abs() < 1e-6 * (1.0 + fd_y.abs()),
                    "trial {trial} raw {j}: {fd_y} vs {}",
                    dy[j]
                );
                assert!(
                    (fd_l - dls[j]).abs() < 1e-6 * (1.0 + fd_l.abs()),
                    "trial {trial} raw {j}: {fd_l} vs {}",
                    dls[j]
                );
            }
        }
    }
}
