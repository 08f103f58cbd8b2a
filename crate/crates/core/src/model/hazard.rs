use super::{Arm, ModelParams, Transition};
use crate::error::{Error, Result};

/// Time on the clock of transition `j`: calendar time for `j = 1, 2`, the
/// sojourn since the nonterminal event for `j = 3`.
fn clock(j: Transition, t: f64, sojourn_origin: f64) -> f64 {
    match j {
        Transition::PostNonterminal => t - sojourn_origin,
        _ => t,
    }
}

fn check_inputs(j: Transition, z: Arm, x: &[f64], gamma: f64, params: &ModelParams) -> Result<()> {
    let (a, k) = (params.shape(z, j), params.rate(z, j));
    if !(a > 0.0) || !(k > 0.0) {
        return Err(Error::domain(format!(
            "transition {} arm {}: shape {a} and rate {k} must be positive",
            j.label(),
            z.index()
        )));
    }
    if !(gamma > 0.0) {
        return Err(Error::domain(format!("frailty {gamma} must be positive")));
    }
    if x.len() != params.p() {
        return Err(Error::domain(format!(
            "covariate vector has length {}, coefficients have {}",
            x.len(),
            params.p()
        )));
    }
    Ok(())
}

/// `gamma * kappa * alpha * u^(alpha - 1) * exp(x' beta)`.
pub fn hazard(
    j: Transition,
    z: Arm,
    t: f64,
    sojourn_origin: f64,
    x: &[f64],
    gamma: f64,
    params: &ModelParams,
) -> Result<f64> {
    check_inputs(j, z, x, gamma, params)?;
    if !(t > 0.0) {
        return Err(Error::domain(format!("hazard time {t} must be positive")));
    }
    let u = clock(j, t, sojourn_origin);
    if !(u > 0.0) {
        return Err(Error::domain(format!("sojourn time {u} must be positive")));
    }
    Ok(log_hazard_ref(params, z, j, u.ln(), x).exp() * gamma)
}

/// `gamma * kappa * u^alpha * exp(x' beta)`, zero at the lower limit of the clock.
pub fn cum_hazard(
    j: Transition,
    z: Arm,
    t: f64,
    sojourn_origin: f64,
    x: &[f64],
    gamma: f64,
    params: &ModelParams,
) -> Result<f64> {
    check_inputs(j, z, x, gamma, params)?;
    let u = clock(j, t, sojourn_origin);
    if !(u >= 0.0) || !(t >= 0.0) {
        return Err(Error::domain(format!(
            "cumulative hazard of transition {} evaluated below its origin (u = {u})",
            j.label()
        )));
    }
    if u == 0.0 {
        return Ok(0.0);
    }
    Ok(gamma * params.rate(z, j) * u.powf(params.shape(z, j)) * params.linear_predictor(z, j, x).exp())
}

/// Log hazard at reference frailty given `ln u`; no validation.
pub fn log_hazard_ref(params: &ModelParams, z: Arm, j: Transition, ln_u: f64, x: &[f64]) -> f64 {
    let a = params.shape(z, j);
    params.rate(z, j).ln() + a.ln() + (a - 1.0) * ln_u + params.linear_predictor(z, j, x)
}

/// Reference-frailty hazard pieces of one observed record, shared by the
/// likelihood and the frailty full conditional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionTerms {
    /// `Lambda_1(y_r) + Lambda_2(y_r) + Lambda_3(y_t | y_r)` at `gamma = 1`;
    /// the third term only when the nonterminal event was observed.
    pub cum_sum: f64,
    /// Sum of log hazards of the observed events at `gamma = 1`.
    pub log_hazard_sum: f64,
    /// Number of observed events, `delta_r + delta_t`.
    pub n_events: u32,
    pub both: bool,
}

impl TransitionTerms {
    pub fn new(subject: &super::SubjectRecord, params: &ModelParams) -> Result<Self> {
        let z = subject.z;
        let x = &subject.x;
        let ln_y = subject.y_r.ln();
        let mut cum = params.rate(z, Transition::Nonterminal)
            * (params.shape(z, Transition::Nonterminal) * ln_y + params.linear_predictor(z, Transition::Nonterminal, x)).exp()
            + params.rate(z, Transition::Terminal)
                * (params.shape(z, Transition::Terminal) * ln_y + params.linear_predictor(z, Transition::Terminal, x)).exp();
        let mut log_h = 0.0;
        if subject.delta_r {
            log_h += log_hazard_ref(params, z, Transition::Nonterminal, ln_y, x);
            let sojourn = subject.y_t - subject.y_r;
            if sojourn > 0.0 {
                cum += params.rate(z, Transition::PostNonterminal)
                    * (params.shape(z, Transition::PostNonterminal) * sojourn.ln()
                        + params.linear_predictor(z, Transition::PostNonterminal, x))
                    .exp();
            }
            if subject.delta_t {
                if !(sojourn > 0.0) {
                    return Err(Error::domain(format!(
                        "subject {}: death at the nonterminal event time has zero sojourn",
                        subject.id
                    )));
                }
                log_h += log_hazard_ref(params, z, Transition::PostNonterminal, sojourn.ln(), x);
            }
        } else if subject.delta_t {
            log_h += log_hazard_ref(params, z, Transition::Terminal, ln_y, x);
        }
        Ok(TransitionTerms {
            cum_sum: cum,
            log_hazard_sum: log_h,
            n_events: subject.delta_r as u32 + subject.delta_t as u32,
            both: subject.delta_r && subject.delta_t,
        })
    }
}
