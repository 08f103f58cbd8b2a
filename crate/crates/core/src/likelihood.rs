//! Observed-data log-likelihood of the illness-death model, conditional on a
//! frailty and marginalized over gamma frailties with mean 1 and variance
//! `sigma`, plus its analytic gradient in unconstrained coordinates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    Arm, ModelParams, ObservedCase, ParamLayout, SubjectRecord, Transition, TransitionTerms, UnconstrainedParams,
};

/// Subjects per partial sum. Partial sums are combined pairwise, so the
/// result does not depend on whether chunks were evaluated in parallel.
const CHUNK: usize = 256;
/// Datasets at least this large evaluate chunks on the rayon pool.
const PARALLEL_MIN: usize = 8 * CHUNK;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseContribution {
    pub case_id: ObservedCase,
    pub loglik: f64,
}

/// Log of one subject's factor of the conditional likelihood given `gamma`.
pub fn conditional_loglik(subject: &SubjectRecord, gamma: f64, params: &ModelParams) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::domain(format!("frailty {gamma} must be positive")));
    }
    let terms = TransitionTerms::new(subject, params)?;
    Ok(terms.n_events as f64 * gamma.ln() + terms.log_hazard_sum - gamma * terms.cum_sum)
}

/// Log of one subject's factor of the likelihood marginalized over the frailty.
pub fn marginal_loglik(subject: &SubjectRecord, params: &ModelParams) -> Result<f64> {
    let sigma = params.sigma;
    if !(sigma > 0.0) {
        return Err(Error::domain(format!("frailty variance {sigma} must be positive")));
    }
    let terms = TransitionTerms::new(subject, params)?;
    Ok(marginal_from_terms(&terms, sigma))
}

fn marginal_from_terms(terms: &TransitionTerms, sigma: f64) -> f64 {
    let both = if terms.both { sigma.ln_1p() } else { 0.0 };
    both + terms.log_hazard_sum - (1.0 / sigma + terms.n_events as f64) * (sigma * terms.cum_sum).ln_1p()
}

pub fn case_contribution(subject: &SubjectRecord, params: &ModelParams) -> Result<CaseContribution> {
    Ok(CaseContribution {
        case_id: subject.case(),
        loglik: marginal_loglik(subject, params)?,
    })
}

pub fn total_marginal_loglik(data: &[SubjectRecord], params: &ModelParams) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::data("dataset is empty"));
    }
    if !(params.sigma > 0.0) {
        return Err(Error::domain(format!("frailty variance {} must be positive", params.sigma)));
    }
    let term = |s: &SubjectRecord| -> Result<f64> {
        Ok(marginal_from_terms(&TransitionTerms::new(s, params)?, params.sigma))
    };
    let terms: Result<Vec<f64>> = if data.len() >= PARALLEL_MIN {
        data.par_iter().map(term).collect()
    } else {
        data.iter().map(term).collect()
    };
    // Sorting first makes the sum a function of the multiset of terms, so
    // reordering subjects leaves the result bit-identical.
    let mut terms = terms?;
    terms.sort_by(f64::total_cmp);
    Ok(pairwise_sum(terms))
}

fn pairwise_sum(mut v: Vec<f64>) -> f64 {
    while v.len() > 1 {
        v = v.chunks(2).map(|c| c.iter().sum()).collect();
    }
    v.first().copied().unwrap_or(0.0)
}

/// Gradient of `total_marginal_loglik(constrain(u))` with respect to `u`.
pub fn grad_total_marginal_loglik(data: &[SubjectRecord], uparams: &UnconstrainedParams) -> Result<Vec<f64>> {
    let prepared = MarginalLikelihood::new(data)?;
    if uparams.as_slice().len() != prepared.layout().dim() {
        return Err(Error::domain("unconstrained vector does not match the data's covariate dimension"));
    }
    let mut grad = vec![0.0; prepared.layout().dim()];
    prepared.value_and_grad(uparams.as_slice(), &mut grad);
    Ok(grad)
}

#[derive(Debug, Clone)]
struct PreparedSubject {
    arm: usize,
    ln_y: f64,
    /// `ln(y_t - y_r)` when the nonterminal event was observed with a positive sojourn.
    ln_sojourn: Option<f64>,
    delta_r: bool,
    delta_t: bool,
}

/// Marginal likelihood with per-subject logs precomputed, for repeated
/// evaluation inside the sampler.
#[derive(Debug, Clone)]
pub struct MarginalLikelihood {
    subjects: Vec<PreparedSubject>,
    /// Row-major covariates, `p` per subject.
    x: Vec<f64>,
    layout: ParamLayout,
}

struct Blocks<'a> {
    log_kappa: [[f64; 3]; 2],
    log_alpha: [[f64; 3]; 2],
    alpha: [[f64; 3]; 2],
    beta: [[&'a [f64]; 3]; 2],
    sigma: f64,
}

impl MarginalLikelihood {
    pub fn new(data: &[SubjectRecord]) -> Result<Self> {
        let p = crate::model::validate_dataset(data)?;
        let mut x = Vec::with_capacity(p * data.len());
        let mut subjects = Vec::with_capacity(data.len());
        for s in data {
            x.extend_from_slice(&s.x);
            let sojourn = s.y_t - s.y_r;
            if s.delta_r && s.delta_t && !(sojourn > 0.0) {
                return Err(Error::data(format!(
                    "subject {}: death observed at the nonterminal event time",
                    s.id
                )));
            }
            subjects.push(PreparedSubject {
                arm: s.z.index(),
                ln_y: s.y_r.ln(),
                ln_sojourn: (s.delta_r && sojourn > 0.0).then(|| sojourn.ln()),
                delta_r: s.delta_r,
                delta_t: s.delta_t,
            });
        }
        Ok(MarginalLikelihood {
            subjects,
            x,
            layout: ParamLayout::new(p),
        })
    }

    pub fn layout(&self) -> ParamLayout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    fn blocks<'a>(&self, u: &'a [f64]) -> Blocks<'a> {
        let l = &self.layout;
        let mut b = Blocks {
            log_kappa: [[0.0; 3]; 2],
            log_alpha: [[0.0; 3]; 2],
            alpha: [[0.0; 3]; 2],
            beta: [[&u[0..0]; 3]; 2],
            sigma: u[l.log_sigma()].exp(),
        };
        for z in Arm::BOTH {
            for j in Transition::ALL {
                let (zi, ji) = (z.index(), j.index());
                b.log_kappa[zi][ji] = u[l.log_kappa(z, j)];
                b.log_alpha[zi][ji] = u[l.log_alpha(z, j)];
                b.alpha[zi][ji] = b.log_alpha[zi][ji].exp();
                let start = l.beta(z, j, 0);
                b.beta[zi][ji] = &u[start..start + l.p];
            }
        }
        b
    }

    /// Log-likelihood at unconstrained `u`; writes its gradient into `grad`.
    pub fn value_and_grad(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        assert_eq!(u.len(), self.layout.dim());
        assert_eq!(grad.len(), self.layout.dim());
        let blocks = self.blocks(u);
        let dim = self.layout.dim();
        let n_chunks = self.subjects.len().div_ceil(CHUNK);
        let eval = |c: usize| {
            let mut g = vec![0.0; dim];
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(self.subjects.len());
            let v = self.accumulate(&blocks, lo..hi, &mut g);
            (v, g)
        };
        let partials: Vec<(f64, Vec<f64>)> = if self.subjects.len() >= PARALLEL_MIN {
            (0..n_chunks).into_par_iter().map(eval).collect()
        } else {
            (0..n_chunks).map(eval).collect()
        };
        let (value, g) = pairwise_reduce(partials, dim);
        grad.copy_from_slice(&g);
        value
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        let mut g = vec![0.0; self.layout.dim()];
        self.value_and_grad(u, &mut g)
    }

    fn accumulate(&self, b: &Blocks<'_>, range: std::ops::Range<usize>, grad: &mut [f64]) -> f64 {
        let l = &self.layout;
        let p = l.p;
        let sigma = b.sigma;
        let log1p_sigma = sigma.ln_1p();
        let mut value = 0.0;
        let mut sigma_grad = 0.0;
        for i in range {
            let s = &self.subjects[i];
            let z = s.arm;
            let x = &self.x[i * p..(i + 1) * p];
            let eta = |j: usize| -> f64 { b.beta[z][j].iter().zip(x).map(|(bb, xx)| bb * xx).sum() };

            // (cumulative hazard, ln u, event observed) per active transition
            let mut terms: [(f64, f64, bool, f64); 3] = [(0.0, 0.0, false, 0.0); 3];
            let mut active = [true, true, false];
            let e0 = eta(0);
            let e1 = eta(1);
            terms[0] = (
                (b.log_kappa[z][0] + b.alpha[z][0] * s.ln_y + e0).exp(),
                s.ln_y,
                s.delta_r,
                e0,
            );
            terms[1] = (
                (b.log_kappa[z][1] + b.alpha[z][1] * s.ln_y + e1).exp(),
                s.ln_y,
                !s.delta_r && s.delta_t,
                e1,
            );
            if let Some(ln_soj) = s.ln_sojourn {
                let e2 = eta(2);
                terms[2] = (
                    (b.log_kappa[z][2] + b.alpha[z][2] * ln_soj + e2).exp(),
                    ln_soj,
                    s.delta_t,
                    e2,
                );
                active[2] = true;
            }

            let cum: f64 = terms.iter().zip(&active).filter(|(_, a)| **a).map(|(t, _)| t.0).sum();
            let d = s.delta_r as u32 as f64 + s.delta_t as u32 as f64;
            let c = 1.0 / sigma + d;
            let denom = 1.0 + sigma * cum;
            let log1p_b = (sigma * cum).ln_1p();
            let w = c * sigma / denom;

            let both = s.delta_r && s.delta_t;
            if both {
                value += log1p_sigma;
            }
            value -= c * log1p_b;

            for j in 0..3 {
                if !active[j] {
                    continue;
                }
                let (lam, ln_u, event, e) = terms[j];
                let alpha = b.alpha[z][j];
                let zz = Arm::BOTH[z];
                let tj = Transition::ALL[j];
                let ev = if event { 1.0 } else { 0.0 };
                if event {
                    value += b.log_kappa[z][j] + b.log_alpha[z][j] + (alpha - 1.0) * ln_u + e;
                }
                let coef = ev - w * lam;
                grad[l.log_kappa(zz, tj)] += coef;
                grad[l.log_alpha(zz, tj)] += ev + coef * alpha * ln_u;
                let start = l.beta(zz, tj, 0);
                for (g, xv) in grad[start..start + p].iter_mut().zip(x) {
                    *g += coef * xv;
                }
            }

            let mut gs = log1p_b / sigma - (1.0 + d * sigma) * cum / denom;
            if both {
                gs += sigma / (1.0 + sigma);
            }
            sigma_grad += gs;
        }
        grad[l.log_sigma()] += sigma_grad;
        value
    }
}

fn pairwise_reduce(mut parts: Vec<(f64, Vec<f64>)>, dim: usize) -> (f64, Vec<f64>) {
    if parts.is_empty() {
        return (0.0, vec![0.0; dim]);
    }
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some((va, mut ga)) = it.next() {
            if let Some((vb, gb)) = it.next() {
                for (a, b) in ga.iter_mut().zip(&gb) {
                    *a += b;
                }
                next.push((va + vb, ga));
            } else {
                next.push((va, ga));
            }
        }
        parts = next;
    }
    parts.pop().unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn subject(delta_r: bool, delta_t: bool, y_r: f64, y_t: f64) -> SubjectRecord {
        SubjectRecord {
            id: "s".into(),
            z: Arm::Control,
            y_r,
            delta_r,
            y_t,
            delta_t,
            x: vec![0.0],
        }
    }

    fn unit_params(sigma: f64) -> ModelParams {
        ModelParams::with_shapes([[1.0; 3]; 2], [[0.25; 3]; 2], sigma, 1)
    }

    #[test]
    fn conditional_pure_survival() {
        // kappa = 0.25, y = 2 -> each Lambda = 0.5
        let s = subject(false, false, 2.0, 2.0);
        let ll = conditional_loglik(&s, 1.0, &unit_params(1.0)).unwrap();
        assert!((ll + 1.0).abs() < 1e-14);
    }

    #[test]
    fn conditional_both_events_unit_hazards() {
        // kappa = 1, alpha = 1: hazards are 1; Lambda_1 + Lambda_2 at 0.25 each, Lambda_3 = 0.5
        let mut params = ModelParams::with_shapes([[1.0; 3]; 2], [[1.0; 3]; 2], 1.0, 1);
        params.kappa[0] = [1.0, 1.0, 1.0];
        let s = subject(true, true, 0.25, 0.75);
        let ll = conditional_loglik(&s, 1.0, &params).unwrap();
        assert!((ll + 1.0).abs() < 1e-14, "{ll}");
    }

    #[test]
    fn marginal_case_closed_forms() {
        let s = subject(false, false, 2.0, 2.0);
        let ll = marginal_loglik(&s, &unit_params(1.0)).unwrap();
        assert!((ll - (-(2f64.ln()))).abs() < 1e-14);
        assert!((ll + 0.693147).abs() < 1e-6);

        let params = ModelParams::with_shapes([[1.0; 3]; 2], [[1.0; 3]; 2], 1.0, 1);
        let s = subject(true, true, 0.25, 0.75);
        let ll = marginal_loglik(&s, &params).unwrap();
        assert!((ll - 0.25f64.ln()).abs() < 1e-14, "{ll}");
        let c = case_contribution(&s, &params).unwrap();
        assert_eq!(c.case_id, ObservedCase::Both);
    }

    #[test]
    fn marginal_rejects_nonpositive_sigma() {
        let s = subject(false, false, 2.0, 2.0);
        let mut p = unit_params(1.0);
        p.sigma = 0.0;
        assert!(marginal_loglik(&s, &p).is_err());
    }

    #[test]
    fn small_sigma_limit_is_conditional_at_mean() {
        let params = ModelParams::with_shapes([[1.3, 0.8, 1.1]; 2], [[0.4, 0.2, 0.9]; 2], 1e-8, 1);
        for (dr, dt, yr, yt) in [(false, false, 1.5, 1.5), (true, false, 0.7, 1.5), (false, true, 1.1, 1.1), (true, true, 0.4, 0.9)] {
            let s = subject(dr, dt, yr, yt);
            let m = marginal_loglik(&s, &params).unwrap();
            let c = conditional_loglik(&s, 1.0, &params).unwrap();
            assert!((m - c).abs() < 1e-4, "{m} vs {c}");
        }
    }

    #[test]
    fn total_of_duplicate_is_twice_single() {
        let params = ModelParams::with_shapes([[1.3, 0.8, 1.1]; 2], [[0.4, 0.2, 0.9]; 2], 0.7, 1);
        let s = subject(true, true, 0.4, 0.9);
        let one = total_marginal_loglik(std::slice::from_ref(&s), &params).unwrap();
        assert_eq!(one, marginal_loglik(&s, &params).unwrap());
        let two = total_marginal_loglik(&[s.clone(), s], &params).unwrap();
        assert_eq!(two, 2.0 * one);
    }

    #[test]
    fn prepared_value_matches_total() {
        let params = ModelParams::with_shapes([[1.3, 0.8, 1.1], [0.9, 1.2, 0.7]], [[0.4, 0.2, 0.9], [0.3, 0.5, 1.1]], 0.7, 1);
        let mut data = vec![
            subject(false, false, 1.5, 1.5),
            subject(true, false, 0.7, 1.5),
            subject(false, true, 1.1, 1.1),
            subject(true, true, 0.4, 0.9),
            subject(true, false, 0.8, 0.8),
        ];
        data[1].z = Arm::Treated;
        data[3].z = Arm::Treated;
        data[2].x = vec![0.5];
        let lik = MarginalLikelihood::new(&data).unwrap();
        let v = lik.value(params.unconstrain().as_slice());
        let t = total_marginal_loglik(&data, &params).unwrap();
        assert!((v - t).abs() < 1e-12 * t.abs().max(1.0));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut data = Vec::new();
        for (i, (dr, dt, yr, yt)) in [
            (false, false, 1.5, 1.5),
            (true, false, 0.7, 1.5),
            (false, true, 1.1, 1.1),
            (true, true, 0.4, 0.9),
            (true, true, 0.2, 1.3),
            (false, true, 0.3, 0.3),
        ]
        .into_iter()
        .enumerate()
        {
            let mut s = subject(dr, dt, yr, yt);
            s.z = Arm::BOTH[i % 2];
            s.x = vec![0.3 * i as f64 - 0.5, (i as f64).sin()];
            data.push(s);
        }
        let lik = MarginalLikelihood::new(&data).unwrap();
        let dim = lik.layout().dim();
        let u: Vec<f64> = (0..dim).map(|k| 0.3 * ((k as f64) * 1.7).cos()).collect();
        let mut g = vec![0.0; dim];
        lik.value_and_grad(&u, &mut g);
        let h = 1e-6;
        for k in 0..dim {
            let mut up = u.clone();
            up[k] += h;
            let mut dn = u.clone();
            dn[k] -= h;
            let fd = (lik.value(&up) - lik.value(&dn)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6 * g[k].abs().max(1.0), "coordinate {k}: {fd} vs {}", g[k]);
        }
    }
}
