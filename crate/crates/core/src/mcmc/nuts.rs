//! Multinomial NUTS with the generalized U-turn criterion, following the
//! recursive tree builder of Stan's `base_nuts`, plus dual-averaging step
//! size adaptation and a diagonal metric estimated once during warm-up.

use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{McmcConfig, TargetDensity};
use crate::error::{Error, Result};
use crate::rng::Rng;

const MAX_DELTA_H: f64 = 1000.0;

/// Log density plus gradient in unconstrained space.
pub(crate) struct Unconstrained<'a, T: ?Sized> {
    pub target: &'a T,
}

impl<T: TargetDensity + ?Sized> Unconstrained<'_, T> {
    /// Out-of-support and non-finite evaluations are returned as `-inf`,
    /// which the sampler treats as a divergence.
    pub fn eval(&self, q: &[f64]) -> Result<(f64, Vec<f64>)> {
        let support = self.target.support();
        let reject = || Ok((f64::NEG_INFINITY, vec![0.0; q.len()]));
        let t = match support.inverse(q) {
            Ok(t) => t,
            Err(Error::Domain(_)) => return reject(),
            Err(e) => return Err(e),
        };
        if !support.contains(&t.x) {
            return reject();
        }
        match self.target.log_density_grad(&t.x) {
            Ok((lp, g)) if lp.is_finite() && g.iter().all(|v| v.is_finite()) => {
                let gu = support.pull_back(&t, q, &g);
                let total = lp + t.log_jacobian;
                if total.is_finite() && gu.iter().all(|v| v.is_finite()) {
                    Ok((total, gu))
                } else {
                    reject()
                }
            }
            Ok(_) | Err(Error::Domain(_)) | Err(Error::Numeric(_)) => reject(),
            Err(e) => Err(e),
        }
    }
}

#[derive(Debug, Clone)]
struct Point {
    q: Vec<f64>,
    p: Vec<f64>,
    grad: Vec<f64>,
    logp: f64,
}

struct Hamiltonian<'a, T: ?Sized> {
    u: Unconstrained<'a, T>,
    inv_metric: Vec<f64>,
}

impl<T: TargetDensity + ?Sized> Hamiltonian<'_, T> {
    fn energy(&self, z: &Point) -> f64 {
        let k: f64 =
            z.p.iter()
                .zip(&self.inv_metric)
                .map(|(p, m)| p * p * m)
                .sum();
        let h = -z.logp + 0.5 * k;
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    fn p_sharp(&self, z: &Point) -> Vec<f64> {
        z.p.iter()
            .zip(&self.inv_metric)
            .map(|(p, m)| p * m)
            .collect()
    }

    fn sample_momentum(&self, z: &mut Point, rng: &mut Rng) {
        for (p, m) in z.p.iter_mut().zip(&self.inv_metric) {
            let n: f64 = rng.sample(StandardNormal);
            *p = n / m.sqrt();
        }
    }

    fn leapfrog(&self, z: &mut Point, eps: f64) -> Result<()> {
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += 0.5 * eps * g;
        }
        for ((q, p), m) in z.q.iter_mut().zip(&z.p).zip(&self.inv_metric) {
            *q += eps * m * p;
        }
        let (lp, g) = self.u.eval(&z.q)?;
        z.logp = lp;
        z.grad = g;
        if lp.is_finite() {
            for (p, g) in z.p.iter_mut().zip(&z.grad) {
                *p += 0.5 * eps * g;
            }
        }
        Ok(())
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn criterion(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

/// Running tallies for one transition.
struct Tally {
    n_leapfrog: usize,
    sum_metro_prob: f64,
    divergent: bool,
}

/// Momentum bookkeeping for one end of a (sub)trajectory.
struct Ends {
    p_sharp_beg: Vec<f64>,
    p_sharp_end: Vec<f64>,
    p_beg: Vec<f64>,
    p_end: Vec<f64>,
    rho: Vec<f64>,
}

impl Ends {
    fn zeros(d: usize) -> Self {
        Self {
            p_sharp_beg: vec![0.0; d],
            p_sharp_end: vec![0.0; d],
            p_beg: vec![0.0; d],
            p_end: vec![0.0; d],
            rho: vec![0.0; d],
        }
    }
}

struct Builder<'h, 'a, T: ?Sized> {
    ham: &'h Hamiltonian<'a, T>,
    eps: f64,
    h0: f64,
}

impl<T: TargetDensity + ?Sized> Builder<'_, '_, T> {
    /// Extends `z` by `2^depth` leapfrog steps in direction `sign`. Returns
    /// whether the subtree is valid (no divergence, no internal U-turn).
    /// `ends.rho` is accumulated into; the other fields are overwritten.
    #[allow(clippy::too_many_arguments)]
    fn build(
        &self,
        depth: usize,
        z: &mut Point,
        z_propose: &mut Point,
        ends: &mut Ends,
        sign: f64,
        log_sum_weight: &mut f64,
        tally: &mut Tally,
        rng: &mut Rng,
    ) -> Result<bool> {
        if depth == 0 {
            self.ham.leapfrog(z, sign * self.eps)?;
            tally.n_leapfrog += 1;
            let h = self.ham.energy(z);
            if h - self.h0 > MAX_DELTA_H {
                tally.divergent = true;
            }
            *log_sum_weight = log_sum_exp(*log_sum_weight, self.h0 - h);
            tally.sum_metro_prob += if self.h0 - h > 0.0 {
                1.0
            } else {
                (self.h0 - h).exp()
            };
            z_propose.clone_from(z);
            ends.p_sharp_beg = self.ham.p_sharp(z);
            ends.p_sharp_end.clone_from(&ends.p_sharp_beg);
            for (r, p) in ends.rho.iter_mut().zip(&z.p) {
                *r += p;
            }
            ends.p_beg.clone_from(&z.p);
            ends.p_end.clone_from(&z.p);
            return Ok(!tally.divergent);
        }
        let d = z.q.len();

        let mut init = Ends::zeros(d);
        let mut lsw_init = f64::NEG_INFINITY;
        if !self.build(
            depth - 1,
            z,
            z_propose,
            &mut init,
            sign,
            &mut lsw_init,
            tally,
            rng,
        )? {
            return Ok(false);
        }

        let mut z_propose_final = z.clone();
        let mut fin = Ends::zeros(d);
        let mut lsw_final = f64::NEG_INFINITY;
        if !self.build(
            depth - 1,
            z,
            &mut z_propose_final,
            &mut fin,
            sign,
            &mut lsw_final,
            tally,
            rng,
        )? {
            return Ok(false);
        }

        let lsw_subtree = log_sum_exp(lsw_init, lsw_final);
        *log_sum_weight = log_sum_exp(*log_sum_weight, lsw_subtree);
        if lsw_final > lsw_subtree || rng.random::<f64>() < (lsw_final - lsw_subtree).exp() {
            std::mem::swap(z_propose, &mut z_propose_final);
        }

        let rho_subtree = add(&init.rho, &fin.rho);
        for (r, s) in ends.rho.iter_mut().zip(&rho_subtree) {
            *r += s;
        }
        let mut persist = criterion(&init.p_sharp_beg, &fin.p_sharp_end, &rho_subtree);
        let rho_ext = add(&init.rho, &fin.p_beg);
        persist &= criterion(&init.p_sharp_beg, &fin.p_sharp_beg, &rho_ext);
        let rho_ext = add(&fin.rho, &init.p_end);
        persist &= criterion(&init.p_sharp_end, &fin.p_sharp_end, &rho_ext);

        ends.p_sharp_beg = init.p_sharp_beg;
        ends.p_beg = init.p_beg;
        ends.p_sharp_end = fin.p_sharp_end;
        ends.p_end = fin.p_end;
        Ok(persist)
    }
}

pub(crate) struct TransitionStats {
    pub accept_stat: f64,
    pub divergent: bool,
    pub depth: usize,
}

fn transition<T: TargetDensity + ?Sized>(
    ham: &Hamiltonian<'_, T>,
    z0: &Point,
    eps: f64,
    max_depth: usize,
    rng: &mut Rng,
) -> Result<(Point, TransitionStats)> {
    let mut z = z0.clone();
    ham.sample_momentum(&mut z, rng);
    let d = z.q.len();
    let h0 = ham.energy(&z);
    let builder = Builder { ham, eps, h0 };

    let mut z_fwd = z.clone();
    let mut z_bck = z.clone();
    let mut z_sample = z.clone();
    let mut z_propose = z.clone();

    let ps = ham.p_sharp(&z);
    // outer ends of the whole trajectory and the inner ends adjacent to the
    // most recent merge
    let (mut p_fwd_fwd, mut p_sharp_fwd_fwd) = (z.p.clone(), ps.clone());
    let (mut p_fwd_bck, mut p_sharp_fwd_bck) = (z.p.clone(), ps.clone());
    let (mut p_bck_fwd, mut p_sharp_bck_fwd) = (z.p.clone(), ps.clone());
    let (mut p_bck_bck, mut p_sharp_bck_bck) = (z.p.clone(), ps);
    let mut rho = z.p.clone();
    let mut log_sum_weight = 0.0;

    let mut tally = Tally {
        n_leapfrog: 0,
        sum_metro_prob: 0.0,
        divergent: false,
    };
    let mut depth = 0;
    while depth < max_depth {
        let mut lsw_subtree = f64::NEG_INFINITY;
        let mut sub = Ends::zeros(d);
        let (rho_fwd, rho_bck);
        let valid;
        if rng.random::<f64>() > 0.5 {
            // the old trajectory becomes the backward half
            rho_bck = rho.clone();
            p_bck_fwd.clone_from(&p_fwd_fwd);
            p_sharp_bck_fwd.clone_from(&p_sharp_fwd_fwd);
            let mut zz = z_fwd.clone();
            valid = builder.build(
                depth,
                &mut zz,
                &mut z_propose,
                &mut sub,
                1.0,
                &mut lsw_subtree,
                &mut tally,
                rng,
            )?;
            z_fwd = zz;
            p_sharp_fwd_bck = sub.p_sharp_beg;
            p_sharp_fwd_fwd = sub.p_sharp_end;
            p_fwd_bck = sub.p_beg;
            p_fwd_fwd = sub.p_end;
            rho_fwd = sub.rho;
        } else {
            rho_fwd = rho.clone();
            p_fwd_bck.clone_from(&p_bck_bck);
            p_sharp_fwd_bck.clone_from(&p_sharp_bck_bck);
            let mut zz = z_bck.clone();
            valid = builder.build(
                depth,
                &mut zz,
                &mut z_propose,
                &mut sub,
                -1.0,
                &mut lsw_subtree,
                &mut tally,
                rng,
            )?;
            z_bck = zz;
            p_sharp_bck_fwd = sub.p_sharp_beg;
            p_sharp_bck_bck = sub.p_sharp_end;
            p_bck_fwd = sub.p_beg;
            p_bck_bck = sub.p_end;
            rho_bck = sub.rho;
        }
        if !valid {
            break;
        }
        depth += 1;

        if lsw_subtree > log_sum_weight
            || rng.random::<f64>() < (lsw_subtree - log_sum_weight).exp()
        {
            z_sample.clone_from(&z_propose);
        }
        log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);

        rho = add(&rho_bck, &rho_fwd);
        let mut persist = criterion(&p_sharp_bck_bck, &p_sharp_fwd_fwd, &rho);
        let rho_ext = add(&rho_bck, &p_fwd_bck);
        persist &= criterion(&p_sharp_bck_bck, &p_sharp_fwd_bck, &rho_ext);
        let rho_ext = add(&rho_fwd, &p_bck_fwd);
        persist &= criterion(&p_sharp_bck_fwd, &p_sharp_fwd_fwd, &rho_ext);
        if !persist {
            break;
        }
    }
    let accept_stat = if tally.n_leapfrog > 0 {
        tally.sum_metro_prob / tally.n_leapfrog as f64
    } else {
        0.0
    };
    Ok((
        z_sample,
        TransitionStats {
            accept_stat,
            divergent: tally.divergent,
            depth,
        },
    ))
}

/// Stan's heuristic: double or halve until a single leapfrog step crosses
/// an acceptance probability of 0.8.
fn init_stepsize<T: TargetDensity + ?Sized>(
    ham: &Hamiltonian<'_, T>,
    z0: &Point,
    mut eps: f64,
    rng: &mut Rng,
) -> Result<f64> {
    let log08 = 0.8f64.ln();
    let mut z = z0.clone();
    ham.sample_momentum(&mut z, rng);
    let h0 = ham.energy(&z);
    ham.leapfrog(&mut z, eps)?;
    let delta = h0 - ham.energy(&z);
    let up = delta > log08;
    loop {
        let mut z = z0.clone();
        ham.sample_momentum(&mut z, rng);
        let h0 = ham.energy(&z);
        ham.leapfrog(&mut z, eps)?;
        let delta = h0 - ham.energy(&z);
        if (up && !(delta > log08)) || (!up && !(delta < log08)) {
            break;
        }
        eps = if up { 2.0 * eps } else { 0.5 * eps };
        if eps > 1e7 {
            return Err(Error::Sampler(
                "step size diverged to infinity; the posterior may be improper".into(),
            ));
        }
        if eps < 1e-12 {
            return Err(Error::Sampler(
                "step size collapsed to zero; the target may be ill-posed".into(),
            ));
        }
    }
    Ok(eps)
}

/// Nesterov dual averaging of `log ε` toward a target acceptance statistic.
#[derive(Debug, Clone)]
pub struct DualAveraging {
    pub mu: f64,
    pub delta: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub t0: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
}

impl DualAveraging {
    pub fn new(eps0: f64, delta: f64) -> Self {
        Self {
            mu: (10.0 * eps0).ln(),
            delta,
            gamma: 0.05,
            kappa: 0.75,
            t0: 10.0,
            counter: 0.0,
            s_bar: 0.0,
            x_bar: 0.0,
        }
    }

    pub fn restart(&mut self, eps0: f64) {
        self.mu = (10.0 * eps0).ln();
        self.counter = 0.0;
        self.s_bar = 0.0;
        self.x_bar = 0.0;
    }

    /// Update with the latest acceptance statistic; returns the next step size.
    pub fn learn(&mut self, accept_stat: f64) -> f64 {
        self.counter += 1.0;
        let a = accept_stat.min(1.0);
        let eta = 1.0 / (self.counter + self.t0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.delta - a);
        let x = self.mu - self.s_bar * self.counter.sqrt() / self.gamma;
        let x_eta = self.counter.powf(-self.kappa);
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x;
        x.exp()
    }

    pub fn final_stepsize(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// One chain's output.
pub(crate) struct ChainRun {
    pub draws: Vec<Vec<f64>>,
    pub accept_stat: f64,
    pub divergences: usize,
    pub warmup_divergences: usize,
    pub transitions: usize,
    pub step_size: f64,
    pub mean_depth: f64,
    pub inv_metric: Vec<f64>,
}

/// Sample variance of the window, shrunk toward 1e-3 as in Stan.
fn regularized_variance(window: &[Vec<f64>]) -> Vec<f64> {
    let n = window.len() as f64;
    let d = window[0].len();
    (0..d)
        .map(|j| {
            let mean = window.iter().map(|q| q[j]).sum::<f64>() / n;
            let var = window.iter().map(|q| (q[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
        })
        .collect()
}

pub(crate) fn run_chain<T: TargetDensity + ?Sized>(
    target: &T,
    init: &[f64],
    cfg: &McmcConfig,
    rng: &mut Rng,
) -> Result<ChainRun> {
    let support = target.support();
    let (q0, _) = support.forward(init)?;
    let mut ham = Hamiltonian {
        u: Unconstrained { target },
        inv_metric: vec![1.0; q0.len()],
    };
    let (logp, grad) = ham.u.eval(&q0)?;
    if !logp.is_finite() {
        return Err(Error::Sampler(format!(
            "initial point {init:?} has zero target density"
        )));
    }
    let mut z = Point {
        p: vec![0.0; q0.len()],
        q: q0,
        grad,
        logp,
    };
    let mut eps = init_stepsize(&ham, &z, 1.0, rng)?;
    let mut da = DualAveraging::new(eps, cfg.target_accept);

    let window_start = (0.15 * cfg.burn_in as f64) as usize;
    let window_end = (0.9 * cfg.burn_in as f64) as usize;
    let mut window: Vec<Vec<f64>> = Vec::new();

    let mut out = ChainRun {
        draws: Vec::new(),
        accept_stat: 0.0,
        divergences: 0,
        warmup_divergences: 0,
        transitions: 0,
        step_size: eps,
        mean_depth: 0.0,
        inv_metric: Vec::new(),
    };
    let mut depth_sum = 0usize;
    for it in 0..cfg.iterations {
        let (next, stats) = transition(&ham, &z, eps, cfg.max_tree_depth, rng)?;
        z = next;
        if it < cfg.burn_in {
            if stats.divergent {
                out.warmup_divergences += 1;
            }
            eps = da.learn(stats.accept_stat);
            if it >= window_start && it < window_end {
                window.push(z.q.clone());
            }
            if it + 1 == window_end && window.len() >= 20 {
                ham.inv_metric = regularized_variance(&window);
                eps = init_stepsize(&ham, &z, eps, rng)?;
                da.restart(eps);
            }
            if it + 1 == cfg.burn_in {
                eps = da.final_stepsize();
            }
            continue;
        }
        out.transitions += 1;
        out.accept_stat += stats.accept_stat;
        depth_sum += stats.depth;
        if stats.divergent {
            out.divergences += 1;
        }
        if (it - cfg.burn_in) % cfg.thin == 0 {
            out.draws.push(support.inverse(&z.q)?.x);
        }
    }
    if cfg.burn_in > 0 && out.warmup_divergences == cfg.burn_in {
        return Err(Error::Sampler(format!(
            "every one of the {} warm-up transitions diverged",
            cfg.burn_in
        )));
    }
    if out.transitions > 0 {
        out.accept_stat /= out.transitions as f64;
        out.mean_depth = depth_sum as f64 / out.transitions as f64;
    }
    out.step_size = eps;
    out.inv_metric = ham.inv_metric;
    Ok(out)
}
