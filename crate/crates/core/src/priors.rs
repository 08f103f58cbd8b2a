//! Independent normal priors on the unconstrained parameter coordinates.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Arm, ParamLayout, SubjectRecord, Transition, UnconstrainedParams};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum SigmaPrior {
    /// `log sigma ~ N(mu, sd^2)`.
    LogNormal { mu: f64, sd: f64 },
}

impl Default for SigmaPrior {
    fn default() -> Self {
        SigmaPrior::LogNormal { mu: 0.0, sd: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub beta_sd: f64,
    /// Prior mean of `log kappa_j`, shared by both arms.
    pub kappa_prior_mean: [f64; 3],
    pub kappa_prior_sd: f64,
    pub alpha_log_sd: f64,
    pub sigma_prior: SigmaPrior,
}

impl PriorSpec {
    pub const DEFAULT_BETA_SD: f64 = 2.5;
    pub const DEFAULT_ALPHA_LOG_SD: f64 = 2.0;

    /// Default spec with the given log-baseline-hazard means.
    pub fn with_kappa_means(kappa_prior_mean: [f64; 3]) -> Self {
        PriorSpec {
            beta_sd: Self::DEFAULT_BETA_SD,
            kappa_prior_mean,
            kappa_prior_sd: 100f64.ln() / 2.0,
            alpha_log_sd: Self::DEFAULT_ALPHA_LOG_SD,
            sigma_prior: SigmaPrior::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let SigmaPrior::LogNormal { mu, sd } = self.sigma_prior;
        for (name, v) in [
            ("beta_sd", self.beta_sd),
            ("kappa_prior_sd", self.kappa_prior_sd),
            ("alpha_log_sd", self.alpha_log_sd),
            ("sigma_prior.sd", sd),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} = {v} must be positive and finite")));
            }
        }
        if !mu.is_finite() || self.kappa_prior_mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::config("prior means must be finite"));
        }
        Ok(())
    }

    /// `(mean, sd)` of the prior on each unconstrained coordinate.
    pub fn coordinate_moments(&self, layout: &ParamLayout) -> Vec<(f64, f64)> {
        let mut m = vec![(0.0, self.beta_sd); layout.dim()];
        for z in Arm::BOTH {
            for j in Transition::ALL {
                m[layout.log_kappa(z, j)] = (self.kappa_prior_mean[j.index()], self.kappa_prior_sd);
                m[layout.log_alpha(z, j)] = (0.0, self.alpha_log_sd);
            }
        }
        let SigmaPrior::LogNormal { mu, sd } = self.sigma_prior;
        m[layout.log_sigma()] = (mu, sd);
        m
    }
}

/// Pooled event counts `E_j` and person-time `PT_j` per transition.
pub fn crude_rates(data: &[SubjectRecord]) -> ([f64; 3], [f64; 3]) {
    let mut e = [0.0; 3];
    let mut pt = [0.0; 3];
    for s in data {
        let (dr, dt) = (s.delta_r as u8 as f64, s.delta_t as u8 as f64);
        e[0] += dr;
        e[1] += dt * (1.0 - dr);
        e[2] += dr * dt;
        pt[0] += s.y_r;
        pt[2] += dr * (s.y_t - s.y_r);
    }
    pt[1] = pt[0];
    (e, pt)
}

/// Default spec centring each `log kappa_j` at the crude pooled event rate.
pub fn derive_hyperparams(data: &[SubjectRecord]) -> Result<PriorSpec> {
    let (e, pt) = crude_rates(data);
    let mut means = [0.0; 3];
    for j in 0..3 {
        if e[j] == 0.0 || !(pt[j] > 0.0) {
            return Err(Error::config(format!(
                "transition {} has {} events over {} person-time; set kappa_prior_mean manually",
                j + 1,
                e[j],
                pt[j]
            )));
        }
        means[j] = (e[j] / pt[j]).ln();
    }
    Ok(PriorSpec::with_kappa_means(means))
}

fn normal_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let d = (x - mean) / sd;
    -0.5 * d * d - sd.ln() - LN_SQRT_2PI
}

pub fn log_prior(uparams: &UnconstrainedParams, spec: &PriorSpec) -> f64 {
    let u = uparams.as_slice();
    let layout = layout_for(u.len());
    spec.coordinate_moments(&layout)
        .iter()
        .zip(u)
        .map(|(&(m, s), &x)| normal_logpdf(x, m, s))
        .sum()
}

/// Adds the prior gradient to `grad` and returns the prior log-density.
pub fn log_prior_and_grad(u: &[f64], moments: &[(f64, f64)], grad: &mut [f64]) -> f64 {
    let mut lp = 0.0;
    for ((&x, &(m, s)), g) in u.iter().zip(moments).zip(grad.iter_mut()) {
        lp += normal_logpdf(x, m, s);
        *g -= (x - m) / (s * s);
    }
    lp
}

/// One draw of the unconstrained vector from the prior.
pub fn sample_prior<R: Rng + ?Sized>(spec: &PriorSpec, layout: &ParamLayout, rng: &mut R) -> UnconstrainedParams {
    UnconstrainedParams(
        spec.coordinate_moments(layout)
            .into_iter()
            .map(|(m, s)| Normal::new(m, s).expect("validated sd").sample(rng))
            .collect(),
    )
}

fn layout_for(dim: usize) -> ParamLayout {
    assert!(dim >= 13 && (dim - 13) % 6 == 0, "length {dim} is not a valid parameter dimension");
    ParamLayout::new((dim - 13) / 6)
}
