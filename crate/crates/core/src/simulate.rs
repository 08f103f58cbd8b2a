//! Synthetic semicompeting-risks data with known potential outcomes.

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimands::simulate_pair;
use crate::imputation::sample_gamma;
use crate::model::{Arm, ArmOutcome, ModelParams, NonterminalTime, PotentialOutcomeSet, SubjectRecord};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CovariateSpec {
    Normal,
    Binary { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Assignment {
    Randomized { p: f64 },
    /// `P(Z = 1 | x) = logistic(intercept + x' coefs)`.
    Logistic { intercept: f64, coefs: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Censoring {
    /// Administrative censoring time shared by everyone.
    pub admin: Option<f64>,
    /// Independent `Uniform(0, max)` censoring.
    pub uniform_max: Option<f64>,
}

/// Frailty law used when generating data.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FrailtyLaw {
    /// `Gamma(1/sigma, rate 1/sigma)` with `sigma` from the parameters.
    #[default]
    Gamma,
    /// Mean-one lognormal with log-scale standard deviation `sd`, for misspecification checks.
    LogNormal { sd: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub params: ModelParams,
    pub covariates: Vec<CovariateSpec>,
    pub assignment: Assignment,
    pub censoring: Censoring,
    #[serde(default)]
    pub frailty: FrailtyLaw,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::config("n must be at least 1"));
        }
        self.params.validate()?;
        if self.covariates.len() != self.params.p() {
            return Err(Error::config(format!(
                "{} covariate generators for {} coefficients",
                self.covariates.len(),
                self.params.p()
            )));
        }
        for c in &self.covariates {
            if let CovariateSpec::Binary { p } = c {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::config("binary covariate probability must lie in [0, 1]"));
                }
            }
        }
        match &self.assignment {
            Assignment::Randomized { p } if !(0.0..=1.0).contains(p) => {
                return Err(Error::config("assignment probability must lie in [0, 1]"));
            }
            Assignment::Logistic { coefs, .. } if coefs.len() != self.params.p() => {
                return Err(Error::config("logistic assignment needs one coefficient per covariate"));
            }
            _ => {}
        }
        for v in [self.censoring.admin, self.censoring.uniform_max].into_iter().flatten() {
            if !(v > 0.0) {
                return Err(Error::config("censoring times must be positive"));
            }
        }
        if let FrailtyLaw::LogNormal { sd } = self.frailty {
            if !(sd > 0.0) {
                return Err(Error::config("lognormal frailty sd must be positive"));
            }
        }
        Ok(())
    }
}

/// Observed record for a unit whose arm-`z` outcome is censored at `c`.
pub fn observe(id: String, z: Arm, x: Vec<f64>, outcome: ArmOutcome, c: f64) -> SubjectRecord {
    let delta_t = outcome.t <= c;
    let y_t = if delta_t { outcome.t } else { c };
    let (delta_r, y_r) = match outcome.r {
        NonterminalTime::At(r) if r <= c => (true, r),
        _ => (false, y_t),
    };
    SubjectRecord {
        id,
        z,
        y_r,
        delta_r,
        y_t,
        delta_t,
        x,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedData {
    pub records: Vec<SubjectRecord>,
    pub truth: Vec<PotentialOutcomeSet>,
    pub gamma: Vec<f64>,
    pub censoring: Vec<f64>,
}

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn positive_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

pub fn simulate_dataset(cfg: &SimConfig) -> Result<SimulatedData> {
    cfg.validate()?;
    let mut out = SimulatedData {
        records: Vec::with_capacity(cfg.n),
        truth: Vec::with_capacity(cfg.n),
        gamma: Vec::with_capacity(cfg.n),
        censoring: Vec::with_capacity(cfg.n),
    };
    let inv_sigma = 1.0 / cfg.params.sigma;
    for i in 0..cfg.n {
        let mut rng = rng::stream(cfg.seed, "simulate", i as u64);
        let x: Vec<f64> = cfg
            .covariates
            .iter()
            .map(|c| match c {
                CovariateSpec::Normal => rng.sample(StandardNormal),
                CovariateSpec::Binary { p } => Bernoulli::new(*p).expect("validated").sample(&mut rng) as u8 as f64,
            })
            .collect();
        let gamma = match cfg.frailty {
            FrailtyLaw::Gamma => sample_gamma(inv_sigma, inv_sigma, &mut rng)?,
            FrailtyLaw::LogNormal { sd } => LogNormal::new(-0.5 * sd * sd, sd)
                .map_err(|e| Error::config(e.to_string()))?
                .sample(&mut rng),
        };
        let p_treat = match &cfg.assignment {
            Assignment::Randomized { p } => *p,
            Assignment::Logistic { intercept, coefs } => {
                logistic(intercept + coefs.iter().zip(&x).map(|(b, v)| b * v).sum::<f64>())
            }
        };
        let z = if rng.random::<f64>() < p_treat { Arm::Treated } else { Arm::Control };
        let mut c = f64::INFINITY;
        if let Some(a) = cfg.censoring.admin {
            c = c.min(a);
        }
        if let Some(m) = cfg.censoring.uniform_max {
            c = c.min(m * positive_uniform(&mut rng));
        }
        let po = simulate_pair(&x, gamma, &cfg.params, &mut rng);
        out.records.push(observe(format!("{}", i + 1), z, x, po.arm(z), c));
        out.truth.push(po);
        out.gamma.push(gamma);
        out.censoring.push(c);
    }
    Ok(out)
}
