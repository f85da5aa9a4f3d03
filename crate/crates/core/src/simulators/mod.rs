//! Benchmark models: assumed simulators, true data-generating processes and
//! summary maps.

mod fixture;
mod ma1;
mod normal;
mod sir;
mod slcp;
mod stable;
mod toad;

pub use fixture::{Fixture, FixtureKind, FIXTURE_VERSION};
pub use ma1::{autocov_summaries, ma1_simulate, sv_true_simulate};
pub use normal::{cn_simulate, cn_summaries, cn_true_simulate};
pub use sir::{
    apply_weekend_reporting, lag1_correlation, sir_simulate, sir_summaries, sir_true_simulate,
    Diffusion, SirConfig, SirSummaries,
};
pub use slcp::{contaminate_with, slcp_contaminate, slcp_moments, slcp_simulate, SLCP_JITTER};
pub use stable::stable_sample;
pub use toad::{
    toad_simulate, toad_summaries, ToadMatrix, ToadSummaries, RETURN_DISTANCE, TOAD_LAGS,
    TOAD_SUMMARY_DIM,
};

use serde::{Deserialize, Serialize};

use crate::error::{shape_check, Error, Result};
use crate::prior::{PriorDim, PriorSpec};
use crate::rng::Rng;

/// A simulator together with its summary map, prior and observed data.
pub trait Simulator: Send + Sync {
    fn name(&self) -> &'static str;

    fn prior(&self) -> PriorSpec;

    fn param_names(&self) -> Vec<String>;

    fn summary_dim(&self) -> usize;

    /// Parameters used to generate the observed data.
    fn true_params(&self) -> Vec<f64>;

    /// Summaries of one dataset from the assumed model.
    fn simulate(&self, theta: &[f64], rng: &mut Rng) -> Result<Vec<f64>>;

    /// Summaries of the observed data (true process or shipped fixture).
    fn observed(&self, rng: &mut Rng) -> Result<Vec<f64>>;

    fn param_dim(&self) -> usize {
        self.param_names().len()
    }

    fn summary_names(&self) -> Vec<String> {
        (1..=self.summary_dim()).map(|i| format!("s{i}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContaminatedNormal {
    pub n: usize,
    /// Probability of an uncontaminated draw in the true process; 1 makes
    /// the model well specified.
    pub omega: f64,
    pub sigma_eps: f64,
    pub true_theta: f64,
    /// Use the raw draws as summaries instead of (mean, variance).
    pub raw: bool,
}

impl Default for ContaminatedNormal {
    fn default() -> Self {
        Self {
            n: 100,
            omega: 0.8,
            sigma_eps: 2.5,
            true_theta: 1.0,
            raw: false,
        }
    }
}

impl ContaminatedNormal {
    pub fn well_specified() -> Self {
        Self {
            omega: 1.0,
            ..Self::default()
        }
    }

    fn summarize(&self, y: Vec<f64>) -> Result<Vec<f64>> {
        if self.raw {
            Ok(y)
        } else {
            cn_summaries(&y)
        }
    }

    /// Conjugate posterior `N(mean, var)` of θ given the sample mean under
    /// the assumed model and the `N(0, 10²)` prior.
    pub fn conjugate_posterior(&self, sample_mean: f64) -> (f64, f64) {
        let precision = self.n as f64 + 1.0 / 100.0;
        (self.n as f64 * sample_mean / precision, 1.0 / precision)
    }
}

impl Simulator for ContaminatedNormal {
    fn name(&self) -> &'static str {
        "contaminated_normal"
    }
    fn prior(&self) -> PriorSpec {
        PriorSpec::new(vec![PriorDim::Normal {
            mean: 0.0,
            sd: 10.0,
        }])
        .expect("valid prior")
    }
    fn param_names(&self) -> Vec<String> {
        vec!["theta".into()]
    }
    fn summary_dim(&self) -> usize {
        if self.raw {
            self.n
        } else {
            2
        }
    }
    fn summary_names(&self) -> Vec<String> {
        if self.raw {
            (1..=self.n).map(|i| format!("y{i}")).collect()
        } else {
            vec!["mean".into(), "variance".into()]
        }
    }
    fn true_params(&self) -> Vec<f64> {
        vec![self.true_theta]
    }
    fn simulate(&self, theta: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        shape_check("parameter length", 1, theta.len())?;
        self.summarize(cn_simulate(theta[0], self.n, rng))
    }
    fn observed(&self, rng: &mut Rng) -> Result<Vec<f64>> {
        self.summarize(cn_true_simulate(
            self.true_theta,
            self.omega,
            self.sigma_eps,
            self.n,
            rng,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MovingAverage {
    pub len: usize,
    /// Use the shipped observed summaries rather than a fresh true-process draw.
    pub use_fixture: bool,
    pub sv_omega: f64,
    pub sv_kappa: f64,
    pub sv_sigma: f64,
}

impl Default for MovingAverage {
    fn default() -> Self {
        Self {
            len: 100,
            use_fixture: true,
            sv_omega: -0.76,
            sv_kappa: 0.90,
            sv_sigma: 0.36,
        }
    }
}

impl Simulator for MovingAverage {
    fn name(&self) -> &'static str {
        "ma1"
    }
    fn prior(&self) -> PriorSpec {
        PriorSpec::uniform_box(-1.0, 1.0, 1).expect("valid prior")
    }
    fn param_names(&self) -> Vec<String> {
        vec!["theta".into()]
    }
    fn summary_dim(&self) -> usize {
        2
    }
    fn summary_names(&self) -> Vec<String> {
        vec!["autocov0".into(), "autocov1".into()]
    }
    /// Pseudo-true value: the model's closest match to the true process.
    fn true_params(&self) -> Vec<f64> {
        vec![0.0]
    }
    fn simulate(&self, theta: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        shape_check("parameter length", 1, theta.len())?;
        autocov_summaries(&ma1_simulate(theta[0], self.len, rng)?)
    }
    fn observed(&self, rng: &mut Rng) -> Result<Vec<f64>> {
        if self.use_fixture {
            return Ok(Fixture::builtin_ma1().values);
        }
        autocov_summaries(&sv_true_simulate(
            self.sv_omega,
            self.sv_kappa,
            self.sv_sigma,
            self.len,
            rng,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Slcp {
    /// Draws per dataset; the last observed draw is contaminated.
    pub ndraws: usize,
    pub use_fixture: bool,
    pub true_theta: Vec<f64>,
}

impl Default for Slcp {
    fn default() -> Self {
        Self {
            ndraws: 5,
            use_fixture: true,
            true_theta: vec![0.7, -2.9, -1.0, -0.9, 0.6],
        }
    }
}

impl Simulator for Slcp {
    fn name(&self) -> &'static str {
        "slcp"
    }
    fn prior(&self) -> PriorSpec {
        PriorSpec::uniform_box(-3.0, 3.0, 5).expect("valid prior")
    }
    fn param_names(&self) -> Vec<String> {
        (1..=5).map(|i| format!("theta{i}")).collect()
    }
    fn summary_dim(&self) -> usize {
        2 * self.ndraws
    }
    fn true_params(&self) -> Vec<f64> {
        self.true_theta.clone()
    }
    fn simulate(&self, theta: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        slcp_simulate(theta, self.ndraws, rng)
    }
    fn observed(&self, rng: &mut Rng) -> Result<Vec<f64>> {
        if self.ndraws == 0 {
            return Err(Error::Invalid("SLCP needs at least one draw".into()));
        }
        let mut y = slcp_simulate(&self.true_theta, self.ndraws, rng)?;
        let k = y.len() - 2;
        let last = if self.use_fixture {
            let f = Fixture::builtin_slcp();
            [f.values[0], f.values[1]]
        } else {
            slcp_contaminate([y[k], y[k + 1]], rng)
        };
        y[k..].copy_from_slice(&last);
        Ok(y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sir {
    pub model: SirConfig,
    /// Apply the weekend reporting artifact to the observed data.
    pub reporting_artifact: bool,
    pub true_beta: f64,
    pub true_eta: f64,
}

impl Default for Sir {
    fn default() -> Self {
        Self {
            model: SirConfig::default(),
            reporting_artifact: true,
            true_beta: 0.15,
            true_eta: 0.1,
        }
    }
}

impl Sir {
    fn summarize(counts: &[f64]) -> Result<Vec<f64>> {
        let s = sir_summaries(counts)?;
        if s.constant {
            log::debug!("constant SIR series; autocorrelation set to 0");
        }
        Ok(s.values)
    }
}

impl Simulator for Sir {
    fn name(&self) -> &'static str {
        "sir"
    }
    /// θ = (β, η) with η ~ U(0, 0.5) and β | η ~ U(η, 0.5).
    fn prior(&self) -> PriorSpec {
        PriorSpec::new(vec![
            PriorDim::ConditionalUniform { on: 1, high: 0.5 },
            PriorDim::Uniform {
                low: 0.0,
                high: 0.5,
            },
        ])
        .expect("valid prior")
    }
    fn param_names(&self) -> Vec<String> {
        vec!["beta".into(), "eta".into()]
    }
    fn summary_dim(&self) -> usize {
        6
    }
    fn summary_names(&self) -> Vec<String> {
        [
            "mean",
            "median",
            "max",
            "max_day",
            "half_day",
            "autocorrelation",
        ]
        .map(String::from)
        .to_vec()
    }
    fn true_params(&self) -> Vec<f64> {
        vec![self.true_beta, self.true_eta]
    }
    fn simulate(&self, theta: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        shape_check("parameter length", 2, theta.len())?;
        Self::summarize(&sir_simulate(theta[0], theta[1], &self.model, rng)?)
    }
    fn observed(&self, rng: &mut Rng) -> Result<Vec<f64>> {
        let mut counts = sir_simulate(self.true_beta, self.true_eta, &self.model, rng)?;
        if self.reporting_artifact {
            apply_weekend_reporting(&mut counts);
        }
        Self::summarize(&counts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Toad {
    pub ndays: usize,
    pub ntoads: usize,
    pub true_theta: Vec<f64>,
}

impl Default for Toad {
    fn default() -> Self {
        Self {
            ndays: 63,
            ntoads: 66,
            true_theta: vec![1.7, 35.0, 0.6],
        }
    }
}

impl Toad {
    pub fn simulate_matrix(&self, theta: &[f64], rng: &mut Rng) -> Result<ToadMatrix> {
        shape_check("parameter length", 3, theta.len())?;
        toad_simulate(theta[0], theta[1], theta[2], self.ndays, self.ntoads, rng)
    }
}

impl Simulator for Toad {
    fn name(&self) -> &'static str {
        "toad"
    }
    fn prior(&self) -> PriorSpec {
        PriorSpec::new(vec![
            PriorDim::Uniform {
                low: 1.0,
                high: 2.0,
            },
            PriorDim::Uniform {
                low: 20.0,
                high: 70.0,
            },
            PriorDim::Uniform {
                low: 0.4,
                high: 0.9,
            },
        ])
        .expect("valid prior")
    }
    fn param_names(&self) -> Vec<String> {
        vec!["alpha".into(), "delta".into(), "p0".into()]
    }
    fn summary_dim(&self) -> usize {
        TOAD_SUMMARY_DIM
    }
    fn summary_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(TOAD_SUMMARY_DIM);
        for lag in TOAD_LAGS {
            names.push(format!("lag{lag}_returns"));
            names.push(format!("lag{lag}_median"));
            names.extend((1..=10).map(|k| format!("lag{lag}_logdiff{k}")));
        }
        names
    }
    fn true_params(&self) -> Vec<f64> {
        self.true_theta.clone()
    }
    fn simulate(&self, theta: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        let s = toad_summaries(&self.simulate_matrix(theta, rng)?)?;
        if !s.sentinel.is_empty() {
            log::debug!("toad summaries {:?} undefined; sentinel 0 used", s.sentinel);
        }
        Ok(s.values)
    }
    fn observed(&self, rng: &mut Rng) -> Result<Vec<f64>> {
        self.simulate(&self.true_theta, rng)
    }
}

/// Benchmark selection as it appears in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Benchmark {
    ContaminatedNormal(ContaminatedNormal),
    Ma1(MovingAverage),
    Slcp(Slcp),
    Sir(Sir),
    Toad(Toad),
}

impl Benchmark {
    pub fn simulator(&self) -> &dyn Simulator {
        match self {
            Benchmark::ContaminatedNormal(s) => s,
            Benchmark::Ma1(s) => s,
            Benchmark::Slcp(s) => s,
            Benchmark::Sir(s) => s,
            Benchmark::Toad(s) => s,
        }
    }

    /// Check settings that would otherwise only fail inside a simulation.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Invalid(msg));
        match self {
            Benchmark::ContaminatedNormal(s) => {
                if s.n < 2 {
                    return bad(format!("n must be at least 2, got {}", s.n));
                }
                if !(0.0..=1.0).contains(&s.omega) {
                    return bad(format!("omega must lie in [0, 1], got {}", s.omega));
                }
                if !(s.sigma_eps > 0.0 && s.sigma_eps.is_finite()) {
                    return bad(format!("sigma_eps must be positive, got {}", s.sigma_eps));
                }
            }
            Benchmark::Ma1(s) => {
                if s.len < 2 {
                    return bad(format!("len must be at least 2, got {}", s.len));
                }
                if !(s.sv_kappa.abs() < 1.0 && s.sv_sigma > 0.0 && s.sv_omega.is_finite()) {
                    return bad(
                        "stochastic volatility needs |sv_kappa| < 1 and sv_sigma > 0".into(),
                    );
                }
            }
            Benchmark::Slcp(s) => {
                if s.ndraws == 0 {
                    return bad("ndraws must be at least 1".into());
                }
            }
            Benchmark::Sir(s) => s.model.validate(s.true_beta, s.true_eta)?,
            Benchmark::Toad(s) => {
                if s.ndays <= TOAD_LAGS[TOAD_LAGS.len() - 1] || s.ntoads == 0 {
                    return bad(format!(
                        "toad model needs more than {} days and at least one toad",
                        TOAD_LAGS[TOAD_LAGS.len() - 1]
                    ));
                }
            }
        }
        let sim = self.simulator();
        let truth = sim.true_params();
        shape_check("true parameter length", sim.param_dim(), truth.len())?;
        if !sim.prior().contains(&truth) {
            return bad(format!(
                "true parameters {truth:?} lie outside the prior support"
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn dimensions_are_consistent() {
        let all = [
            Benchmark::ContaminatedNormal(ContaminatedNormal::default()),
            Benchmark::Ma1(MovingAverage::default()),
            Benchmark::Slcp(Slcp::default()),
            Benchmark::Sir(Sir::default()),
            Benchmark::Toad(Toad::default()),
        ];
        for b in &all {
            let sim = b.simulator();
            let mut rng = substream(3, &[]);
            let theta = sim.prior().sample(&mut rng);
            assert_eq!(theta.len(), sim.param_dim());
            assert!(sim.prior().contains(&sim.true_params()), "{}", sim.name());
            assert_eq!(
                sim.simulate(&theta, &mut rng).unwrap().len(),
                sim.summary_dim()
            );
            assert_eq!(sim.observed(&mut rng).unwrap().len(), sim.summary_dim());
            assert_eq!(sim.summary_names().len(), sim.summary_dim());
        }
    }

    #[test]
    fn slcp_observed_uses_fixture() {
        let y = Slcp::default().observed(&mut substream(1, &[])).unwrap();
        assert_eq!(&y[8..], &[23.41, -178.90]);
    }

    #[test]
    fn benchmark_from_toml() {
        let b: Benchmark = toml::from_str("name = \"contaminated_normal\"\nomega = 1.0\n").unwrap();
        assert_eq!(
            b,
            Benchmark::ContaminatedNormal(ContaminatedNormal::well_specified())
        );
        assert!(toml::from_str::<Benchmark>("name = \"ma1\"\nbogus = 1\n").is_err());
        assert!(toml::from_str::<Benchmark>("name = \"nope\"\n").is_err());
    }

    #[test]
    fn conjugate_posterior() {
        let (m, v) = ContaminatedNormal::default().conjugate_posterior(1.0);
        assert!((m - 100.0 / 100.01).abs() < 1e-12);
        assert!((v - 1.0 / 100.01).abs() < 1e-12);
    }
}
