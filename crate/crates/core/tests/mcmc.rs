use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use rsnl::mcmc::{
    effective_sample_size, nuts_run, rank_normalized_rhat, ChainSet, McmcConfig, Support,
    SupportTransform, TargetDensity,
};
use rsnl::rng::substream;
use rsnl::Result;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Zero-mean Gaussian with precision matrix `prec`, optionally restricted.
struct Gaussian {
    prec: Vec<Vec<f64>>,
    support: SupportTransform,
}

impl Gaussian {
    fn standard(d: usize) -> Self {
        let prec = (0..d)
            .map(|i| (0..d).map(|j| f64::from(u8::from(i == j))).collect())
            .collect();
        Self {
            prec,
            support: SupportTransform::identity(d),
        }
    }

    fn correlated(rho: f64) -> Self {
        let det = 1.0 - rho * rho;
        Self {
            prec: vec![vec![1.0 / det, -rho / det], vec![-rho / det, 1.0 / det]],
            support: SupportTransform::identity(2),
        }
    }
}

impl TargetDensity for Gaussian {
    fn dim(&self) -> usize {
        self.prec.len()
    }
    fn log_density_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let g: Vec<f64> = self
            .prec
            .iter()
            .map(|row| -row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let lp = 0.5 * g.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        Ok((lp, g))
    }
    fn support(&self) -> &SupportTransform {
        &self.support
    }
}

/// Flat density on a box.
struct Flat {
    support: SupportTransform,
}

impl TargetDensity for Flat {
    fn dim(&self) -> usize {
        self.support.dim()
    }
    fn log_density_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((0.0, vec![0.0; x.len()]))
    }
    fn support(&self) -> &SupportTransform {
        &self.support
    }
}

fn cfg(seed: u64) -> McmcConfig {
    McmcConfig {
        seed,
        ..McmcConfig::default()
    }
}

fn inits(d: usize, chains: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = substream(seed, &[]);
    (0..chains)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

fn moments(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (
        m,
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64,
    )
}

#[test]
fn standard_normal_2d_moments() {
    let cs = nuts_run(&Gaussian::standard(2), &inits(2, 4, 1), &cfg(1)).unwrap();
    assert_eq!((cs.num_chains(), cs.num_draws()), (4, 250));
    let flat = cs.flatten();
    for j in 0..2 {
        let (m, v) = moments(&flat.iter().map(|d| d[j]).collect::<Vec<_>>());
        assert!(m.abs() < 0.05, "mean {m}");
        assert!((v - 1.0).abs() < 0.1, "variance {v}");
    }
}

#[test]
fn uniform_through_logit() {
    let t = Flat {
        support: SupportTransform::new(vec![Support::Interval(-1.0, 1.0)]).unwrap(),
    };
    let cs = nuts_run(
        &t,
        &inits(1, 4, 2)
            .iter()
            .map(|v| vec![v[0] * 0.9])
            .collect::<Vec<_>>(),
        &cfg(2),
    )
    .unwrap();
    let flat: Vec<f64> = cs.flatten().iter().map(|d| d[0]).collect();
    let (m, _) = moments(&flat);
    assert!(m.abs() < 0.05, "mean {m}");
    assert!(flat.iter().all(|&x| x > -1.0 && x < 1.0));
}

#[test]
fn correlated_gaussian() {
    let cs = nuts_run(&Gaussian::correlated(0.9), &inits(2, 4, 3), &cfg(3)).unwrap();
    let flat = cs.flatten();
    let a: Vec<f64> = flat.iter().map(|d| d[0]).collect();
    let b: Vec<f64> = flat.iter().map(|d| d[1]).collect();
    let (ma, va) = moments(&a);
    let (mb, vb) = moments(&b);
    let cov = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / (a.len() - 1) as f64;
    let r = cov / (va * vb).sqrt();
    assert!((r - 0.9).abs() < 0.07, "correlation {r}");
}

fn ks_statistic(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn standard_normal_passes_ks() {
    let c = McmcConfig {
        thin: 1,
        iterations: 2000,
        ..cfg(4)
    };
    let cs = nuts_run(&Gaussian::standard(1), &inits(1, 4, 4), &c).unwrap();
    let mut draws: Vec<f64> = cs.flatten().iter().map(|d| d[0]).collect();
    assert_eq!(draws.len(), 4000);
    let n = Normal::standard();
    let d = ks_statistic(&mut draws, |x| n.cdf(x));
    // asymptotic critical value at significance 0.001
    let crit = 1.949 / (4000f64).sqrt();
    assert!(d < crit, "KS distance {d} vs {crit}");
}

#[test]
fn uniform_histogram_is_flat() {
    let t = Flat {
        support: SupportTransform::new(vec![Support::Interval(2.0, 5.0)]).unwrap(),
    };
    let c = McmcConfig {
        thin: 5,
        iterations: 6000,
        ..cfg(5)
    };
    let cs = nuts_run(&t, &vec![vec![3.5]; 4], &c).unwrap();
    let draws: Vec<f64> = cs.flatten().iter().map(|d| d[0]).collect();
    let mut counts = [0.0f64; 20];
    for x in &draws {
        counts[(((x - 2.0) / 3.0 * 20.0) as usize).min(19)] += 1.0;
    }
    let expected = draws.len() as f64 / 20.0;
    let chi2: f64 = counts
        .iter()
        .map(|c| (c - expected).powi(2) / expected)
        .sum();
    let p = 1.0 - ChiSquared::new(19.0).unwrap().cdf(chi2);
    assert!(p > 0.001, "chi2 {chi2}, p {p}");
}

#[test]
fn sampling_is_deterministic() {
    let c = McmcConfig {
        iterations: 300,
        burn_in: 100,
        ..cfg(6)
    };
    let a = nuts_run(&Gaussian::correlated(0.5), &inits(2, 4, 6), &c).unwrap();
    let b = nuts_run(&Gaussian::correlated(0.5), &inits(2, 4, 6), &c).unwrap();
    assert_eq!(a, b);
}

#[test]
fn conditional_support_is_respected() {
    // β | η ~ U(η, 0.5), η ~ U(0, 0.5)
    let support = SupportTransform::new(vec![
        Support::AboveOther { on: 1, upper: 0.5 },
        Support::Interval(0.0, 0.5),
    ])
    .unwrap();
    struct Tri(SupportTransform);
    impl TargetDensity for Tri {
        fn dim(&self) -> usize {
            2
        }
        fn log_density_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
            // density of β|η is 1/(0.5-η)
            Ok((-(0.5 - x[1]).ln(), vec![0.0, 1.0 / (0.5 - x[1])]))
        }
        fn support(&self) -> &SupportTransform {
            &self.0
        }
    }
    let cs = nuts_run(&Tri(support), &vec![vec![0.4, 0.2]; 4], &cfg(7)).unwrap();
    let flat = cs.flatten();
    assert!(flat
        .iter()
        .all(|d| d[1] > 0.0 && d[1] < 0.5 && d[0] > d[1] && d[0] < 0.5));
    // marginal of η is U(0, 0.5): mean 0.25
    let (m, _) = moments(&flat.iter().map(|d| d[1]).collect::<Vec<_>>());
    assert!((m - 0.25).abs() < 0.02, "eta mean {m}");
}

fn iid_chains(chains: usize, n: usize, seed: u64) -> Vec<Vec<Vec<f64>>> {
    let mut rng = substream(seed, &[]);
    (0..chains)
        .map(|_| (0..n).map(|_| vec![rng.sample(StandardNormal)]).collect())
        .collect()
}

#[test]
fn rhat_on_iid_chains() {
    let one = iid_chains(1, 1000, 8).remove(0);
    let cs = ChainSet::from_draws(vec![one.clone(), one.clone(), one.clone(), one]).unwrap();
    let r = rank_normalized_rhat(&cs)[0].unwrap();
    assert!(r > 0.99 && r < 1.02, "{r}");
    let cs = ChainSet::from_draws(iid_chains(4, 1000, 9)).unwrap();
    let r = rank_normalized_rhat(&cs)[0].unwrap();
    assert!(r > 0.99 && r < 1.02, "{r}");
}

#[test]
fn rhat_detects_offset_chains() {
    let mut ch = iid_chains(2, 500, 10);
    for d in &mut ch[1] {
        d[0] += 10.0;
    }
    let r = rank_normalized_rhat(&ChainSet::from_draws(ch).unwrap())[0].unwrap();
    assert!(r > 1.5, "{r}");
}

#[test]
fn ess_on_iid_chains() {
    let ess =
        effective_sample_size(&ChainSet::from_draws(iid_chains(4, 1000, 11)).unwrap())[0].unwrap();
    assert!(ess >= 3000.0, "{ess}");
}

#[test]
fn ess_on_ar1_chain() {
    let phi: f64 = 0.9;
    let n = 20_000;
    let mut rng = substream(12, &[]);
    let mut x = 0.0;
    let chain: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            x = phi * x + (1.0 - phi * phi).sqrt() * rng.sample::<f64, _>(StandardNormal);
            vec![x]
        })
        .collect();
    let ess = effective_sample_size(&ChainSet::from_draws(vec![chain]).unwrap())[0].unwrap();
    let expected = n as f64 * (1.0 - phi) / (1.0 + phi);
    assert!(
        ess > expected / 2.0 && ess < expected * 2.0,
        "{ess} vs {expected}"
    );
}

#[test]
fn degenerate_dimension_is_flagged() {
    let ch: Vec<Vec<Vec<f64>>> = iid_chains(4, 100, 13)
        .into_iter()
        .map(|c| c.into_iter().map(|d| vec![d[0], 3.0]).collect())
        .collect();
    let cs = ChainSet::from_draws(ch).unwrap();
    assert!(rank_normalized_rhat(&cs)[0].is_some());
    assert_eq!(rank_normalized_rhat(&cs)[1], None);
    assert_eq!(effective_sample_size(&cs)[1], None);
}

fn mixed_support() -> SupportTransform {
    SupportTransform::new(vec![
        Support::Real,
        Support::LowerBound(-2.0),
        Support::Interval(-1.0, 3.0),
        Support::AboveOther { on: 2, upper: 4.0 },
    ])
    .unwrap()
}

#[test]
fn log_jacobian_matches_numerical_determinant() {
    let t = mixed_support();
    let u = [0.3, -0.7, 1.1, -0.4];
    let lj = t.inverse(&u).unwrap().log_jacobian;
    // lower-triangular after reordering: the determinant is the product of
    // the diagonal partials dx_i/du_i
    let h = 1e-6;
    let mut det = 1.0;
    for i in 0..4 {
        let mut up = u;
        up[i] += h;
        let mut um = u;
        um[i] -= h;
        let d = (t.inverse(&up).unwrap().x[i] - t.inverse(&um).unwrap().x[i]) / (2.0 * h);
        det *= d;
    }
    assert!((lj - det.ln()).abs() < 1e-7, "{lj} vs {}", det.ln());
}

#[test]
fn pull_back_matches_finite_differences() {
    let t = mixed_support();
    // log p(x) = -Σ (x_i - 1)^2 / 2
    let logp = |x: &[f64]| -0.5 * x.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>();
    let total = |u: &[f64]| {
        let inv = t.inverse(u).unwrap();
        logp(&inv.x) + inv.log_jacobian
    };
    let u = [0.3, -0.7, 1.1, -0.4];
    let inv = t.inverse(&u).unwrap();
    let gx: Vec<f64> = inv.x.iter().map(|v| -(v - 1.0)).collect();
    let g = t.pull_back(&inv, &u, &gx);
    let h = 1e-6;
    for i in 0..4 {
        let mut up = u;
        up[i] += h;
        let mut um = u;
        um[i] -= h;
        let fd = (total(&up) - total(&um)) / (2.0 * h);
        assert!(
            (fd - g[i]).abs() < 1e-6 * (1.0 + fd.abs()),
            "dim {i}: {fd} vs {}",
            g[i]
        );
    }
}

proptest! {
    #[test]
    fn transforms_round_trip(a in -10.0f64..10.0, b in -3.0f64..3.0, c in 0.001f64..0.999, e in 0.001f64..0.999) {
        let t = mixed_support();
        let x2 = -1.0 + 4.0 * c;
        let x = vec![a, -2.0 + b.exp(), x2, x2 + (4.0 - x2) * e];
        let (u, lj) = t.forward(&x).unwrap();
        let back = t.inverse(&u).unwrap();
        prop_assert!((back.log_jacobian - lj).abs() < 1e-12);
        for (p, q) in x.iter().zip(&back.x) {
            prop_assert!((p - q).abs() < 1e-12 * (1.0 + p.abs()));
        }
        prop_assert!(t.contains(&back.x));
    }
}
