//! Frailty draws from their full conditional and imputation of censored
//! factual and unobserved counterfactual outcomes.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    Arm, ArmOutcome, ModelParams, NonterminalTime, PotentialOutcomeSet, SubjectRecord, Transition, TransitionTerms,
};
use crate::rng::{self, StreamRng};

/// `(shape, rate)` of the gamma full conditional of one subject's frailty.
pub fn frailty_posterior(subject: &SubjectRecord, params: &ModelParams) -> Result<(f64, f64)> {
    let terms = TransitionTerms::new(subject, params)?;
    let inv = 1.0 / params.sigma;
    Ok((inv + terms.n_events as f64, inv + terms.cum_sum))
}

pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::domain(format!("gamma({shape}, rate {rate}): {e}")))?;
    let v = g.sample(rng);
    // a zero can only come from underflow at tiny shapes
    Ok(if v > 0.0 { v } else { f64::MIN_POSITIVE })
}

pub fn sample_frailty<R: Rng + ?Sized>(subject: &SubjectRecord, params: &ModelParams, rng: &mut R) -> Result<f64> {
    if !(params.sigma > 0.0) {
        return Err(Error::domain("frailty variance must be positive"));
    }
    let (shape, rate) = frailty_posterior(subject, params)?;
    sample_gamma(shape, rate, rng)
}

/// Standard exponential from a uniform with exact zeros rejected.
fn unit_exponential<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return -(-u).ln_1p();
        }
    }
}

/// Time `u > lower` with cumulative hazard `c * u^alpha`, drawn given survival to `lower`.
fn draw_after<R: Rng + ?Sized>(c: f64, alpha: f64, lower: f64, rng: &mut R) -> f64 {
    let e = unit_exponential(rng);
    if c == 0.0 {
        return f64::INFINITY;
    }
    let u = (lower.powf(alpha) + e / c).powf(1.0 / alpha);
    saturate(u, lower)
}

fn saturate(u: f64, lower: f64) -> f64 {
    if u > lower {
        return u;
    }
    log::warn!("truncated Weibull draw saturated at its lower bound {lower}");
    if lower > 0.0 {
        lower * (1.0 + 1e-9)
    } else {
        f64::MIN_POSITIVE
    }
}

/// Weibull draw with survival `exp(-(t/scale)^shape)` conditioned on `t > lower_bound`.
///
/// Uses `(t/scale)^shape = (lower/scale)^shape - ln(1 - U)`, the inverse CDF
/// of the truncated law written on the cumulative-hazard scale.
pub fn sample_truncated_weibull<R: Rng + ?Sized>(shape: f64, scale: f64, lower_bound: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()) {
        return Err(Error::domain(format!("Weibull shape {shape} and scale {scale} must be positive")));
    }
    if !(lower_bound >= 0.0) {
        return Err(Error::domain(format!("lower bound {lower_bound} must be nonnegative")));
    }
    let e = unit_exponential(rng);
    let t = scale * ((lower_bound / scale).powf(shape) + e).powf(1.0 / shape);
    Ok(saturate(t, lower_bound))
}

/// `gamma * kappa * exp(x' beta)` for one arm and transition.
fn multiplier(params: &ModelParams, z: Arm, j: Transition, x: &[f64], gamma: f64) -> f64 {
    gamma * params.rate(z, j) * params.linear_predictor(z, j, x).exp()
}

/// Outcome under arm `z` for a unit known to be event-free and alive at `c`
/// on every clock (`c = 0` draws from the unconditional law).
fn complete_from<R: Rng + ?Sized>(z: Arm, x: &[f64], gamma: f64, params: &ModelParams, c: f64, rng: &mut R) -> ArmOutcome {
    let m = |j| multiplier(params, z, j, x, gamma);
    let r = draw_after(m(Transition::Nonterminal), params.shape(z, Transition::Nonterminal), c, rng);
    let t = draw_after(m(Transition::Terminal), params.shape(z, Transition::Terminal), c, rng);
    if t < r {
        return ArmOutcome { r: NonterminalTime::Undefined, t };
    }
    let s = draw_after(m(Transition::PostNonterminal), params.shape(z, Transition::PostNonterminal), 0.0, rng);
    ArmOutcome {
        r: NonterminalTime::At(r),
        t: after(r, s),
    }
}

/// `r + s`, nudged upward if rounding would collapse a positive sojourn.
fn after(r: f64, s: f64) -> f64 {
    let t = r + s;
    if t > r {
        t
    } else {
        r + r * f64::EPSILON
    }
}

/// Potential outcomes under one arm at frailty `gamma`, with no truncation.
pub fn simulate_arm<R: Rng + ?Sized>(z: Arm, x: &[f64], gamma: f64, params: &ModelParams, rng: &mut R) -> ArmOutcome {
    complete_from(z, x, gamma, params, 0.0, rng)
}

/// Completes the observed arm consistently with the observed data.
pub fn impute_factual<R: Rng + ?Sized>(subject: &SubjectRecord, params: &ModelParams, gamma: f64, rng: &mut R) -> ArmOutcome {
    let z = subject.z;
    match (subject.delta_r, subject.delta_t) {
        (true, true) => ArmOutcome {
            r: NonterminalTime::At(subject.y_r),
            t: subject.y_t,
        },
        (false, true) => ArmOutcome {
            r: NonterminalTime::Undefined,
            t: subject.y_t,
        },
        (false, false) => complete_from(z, &subject.x, gamma, params, subject.y_t, rng),
        (true, false) => {
            let j = Transition::PostNonterminal;
            let lower = subject.y_t - subject.y_r;
            let s = draw_after(multiplier(params, z, j, &subject.x, gamma), params.shape(z, j), lower, rng);
            ArmOutcome {
                r: NonterminalTime::At(subject.y_r),
                t: after(subject.y_r, s),
            }
        }
    }
}

/// Draws the unobserved arm's outcomes at the same frailty.
pub fn impute_counterfactual<R: Rng + ?Sized>(subject: &SubjectRecord, params: &ModelParams, gamma: f64, rng: &mut R) -> ArmOutcome {
    simulate_arm(subject.z.other(), &subject.x, gamma, params, rng)
}

/// Frailty and complete potential outcomes for one subject at one draw.
pub fn impute_subject<R: Rng + ?Sized>(
    subject: &SubjectRecord,
    params: &ModelParams,
    rng: &mut R,
) -> Result<(f64, PotentialOutcomeSet)> {
    let gamma = sample_frailty(subject, params, rng)?;
    let factual = impute_factual(subject, params, gamma, rng);
    let counterfactual = impute_counterfactual(subject, params, gamma, rng);
    Ok((gamma, PotentialOutcomeSet::from_arms(subject.z, factual, counterfactual)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputedDraw {
    pub draw: usize,
    pub gamma: Vec<f64>,
    pub outcomes: Vec<PotentialOutcomeSet>,
}

/// Stream for subject `i` at draw `b`.
pub fn subject_stream(seed: u64, draw: usize, subject: usize) -> StreamRng {
    rng::stream(seed, &format!("impute/{draw}"), subject as u64)
}

/// Imputes every subject at one posterior draw.
pub fn impute_draw(data: &[SubjectRecord], params: &ModelParams, seed: u64, draw: usize) -> Result<ImputedDraw> {
    params.validate()?;
    let mut gamma = Vec::with_capacity(data.len());
    let mut outcomes = Vec::with_capacity(data.len());
    for (i, s) in data.iter().enumerate() {
        let mut r = subject_stream(seed, draw, i);
        let (g, po) = impute_subject(s, params, &mut r)?;
        gamma.push(g);
        outcomes.push(po);
    }
    Ok(ImputedDraw { draw, gamma, outcomes })
}

/// Imputes all draws in parallel; the result is independent of scheduling.
pub fn impute_all(data: &[SubjectRecord], draws: &[ModelParams], seed: u64) -> Result<Vec<ImputedDraw>> {
    draws
        .par_iter()
        .enumerate()
        .map(|(b, p)| impute_draw(data, p, seed, b))
        .collect()
}
