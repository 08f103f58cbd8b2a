//! Posterior predictive checks: replicate data, Kaplan-Meier curves, and
//! the always-alive, Kaplan-Meier and frailty Kolmogorov-Smirnov discrepancies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma as GammaDist};

use crate::error::{Error, Result};
use crate::estimands::{simulate_pair, TimeGrid};
use crate::imputation::{sample_gamma, ImputedDraw};
use crate::model::{Arm, ModelParams, PotentialOutcomeSet, SubjectRecord};
use crate::rng::{self, StreamRng};
use crate::simulate::observe;

/// Per-subject censoring times for replicates: the observed censoring time
/// when death was not observed, otherwise `c_admin` if known, otherwise the
/// largest observed follow-up time.
pub fn censoring_times(data: &[SubjectRecord], c_admin: Option<f64>) -> Vec<f64> {
    let fallback = c_admin.unwrap_or_else(|| data.iter().map(|s| s.y_t).fold(0.0, f64::max));
    data.iter().map(|s| s.censoring_time().unwrap_or(fallback)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub records: Vec<SubjectRecord>,
    pub gamma: Vec<f64>,
    pub outcomes: Vec<PotentialOutcomeSet>,
}

/// Replicate dataset at one parameter draw: fresh prior frailties, both
/// arms simulated, the observed arm censored at `censoring[i]`.
pub fn generate_replicate(
    data: &[SubjectRecord],
    params: &ModelParams,
    censoring: &[f64],
    rng: &mut StreamRng,
) -> Result<Replicate> {
    if censoring.len() != data.len() {
        return Err(Error::domain("one censoring time per subject is required"));
    }
    let inv = 1.0 / params.sigma;
    let mut rep = Replicate {
        records: Vec::with_capacity(data.len()),
        gamma: Vec::with_capacity(data.len()),
        outcomes: Vec::with_capacity(data.len()),
    };
    for (s, &c) in data.iter().zip(censoring) {
        let g = sample_gamma(inv, inv, rng)?;
        let po = simulate_pair(&s.x, g, params, rng);
        rep.records.push(observe(s.id.clone(), s.z, s.x.clone(), po.arm(s.z), c));
        rep.gamma.push(g);
        rep.outcomes.push(po);
    }
    Ok(rep)
}

/// Kaplan-Meier survival at `eval_times`, as the product over event times
/// strictly before each evaluation time.
///
/// The product is carried as a reduced integer ratio and converted once, so
/// results equal the correctly rounded value of the exact fraction whenever
/// its terms fit in 53 bits. Longer products fall back to floating point.
pub fn km_estimate(times: &[f64], events: &[bool], eval_times: &[f64]) -> Result<Vec<f64>> {
    if times.is_empty() {
        return Err(Error::domain("Kaplan-Meier estimate of an empty sample"));
    }
    if times.len() != events.len() {
        return Err(Error::domain("times and event flags differ in length"));
    }
    if times.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::domain("times must be nonnegative"));
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

    // (event time, survival just after it)
    let mut steps: Vec<(f64, f64)> = Vec::new();
    let mut exact = Some((1u128, 1u128));
    let mut approx = 1.0f64;
    let n = times.len();
    let mut i = 0;
    while i < n {
        let tau = times[order[i]];
        let mut j = i;
        let mut deaths = 0u128;
        while j < n && times[order[j]] == tau {
            deaths += events[order[j]] as u128;
            j += 1;
        }
        if deaths > 0 {
            let at_risk = (n - i) as u128;
            approx *= (at_risk - deaths) as f64 / at_risk as f64;
            exact = exact.and_then(|(p, q)| {
                let (p, q) = (p.checked_mul(at_risk - deaths)?, q.checked_mul(at_risk)?);
                let g = gcd(p, q);
                Some((p / g, q / g))
            });
            let value = match exact {
                Some((p, q)) if p < 1 << 53 && q < 1 << 53 => p as f64 / q as f64,
                _ => approx,
            };
            steps.push((tau, value));
        }
        i = j;
    }
    Ok(eval_times
        .iter()
        .map(|&t| {
            let k = steps.partition_point(|(tau, _)| *tau < t);
            if k == 0 {
                1.0
            } else {
                steps[k - 1].1
            }
        })
        .collect())
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

/// Kaplan-Meier death-free survival of arm `z`.
pub fn km_arm(records: &[SubjectRecord], z: Arm, grid: &TimeGrid) -> Result<Vec<f64>> {
    let (t, d): (Vec<f64>, Vec<bool>) = records.iter().filter(|s| s.z == z).map(|s| (s.y_t, s.delta_t)).unzip();
    km_estimate(&t, &d, grid.times())
}

fn fraction_aa(outcomes: &[PotentialOutcomeSet], t: f64) -> f64 {
    outcomes.iter().filter(|po| po.t0 > t && po.t1 > t).count() as f64 / outcomes.len() as f64
}

/// `1(observed AA fraction > replicate AA fraction)` per grid time.
pub fn discrepancy_aa(observed: &[PotentialOutcomeSet], replicate: &[PotentialOutcomeSet], grid: &TimeGrid) -> Vec<bool> {
    grid.times()
        .iter()
        .map(|&t| fraction_aa(observed, t) > fraction_aa(replicate, t))
        .collect()
}

/// `1(KM_obs(t) > KM_rep(t))` per grid time for arm `z`.
pub fn discrepancy_km(observed_km: &[f64], replicate: &[SubjectRecord], z: Arm, grid: &TimeGrid) -> Result<Vec<bool>> {
    let rep = km_arm(replicate, z, grid)?;
    Ok(observed_km.iter().zip(&rep).map(|(o, r)| o > r).collect())
}

/// Mean-one gamma frailty CDF with variance `sigma`.
pub fn frailty_cdf(sigma: f64) -> Result<impl Fn(f64) -> f64> {
    let a = 1.0 / sigma;
    let g = GammaDist::new(a, a).map_err(|e| Error::domain(format!("frailty law with variance {sigma}: {e}")))?;
    Ok(move |x: f64| g.cdf(x))
}

/// Kolmogorov-Smirnov distance between the empirical CDF of `sample` and `cdf`,
/// evaluated on both sides of every jump.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (((i + 1) as f64 / n) - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// `1(KS_obs > KS_rep)` against the frailty law at this draw's `sigma`.
pub fn discrepancy_ks(observed_gamma: &[f64], replicate_gamma: &[f64], sigma: f64) -> Result<bool> {
    let cdf = frailty_cdf(sigma)?;
    Ok(ks_statistic(observed_gamma, &cdf) > ks_statistic(replicate_gamma, &cdf))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimePvalue {
    pub t: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmTimePvalue {
    pub z: u8,
    pub t: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpcReport {
    pub pppv_ks: f64,
    pub pppv_aa: Vec<TimePvalue>,
    pub pppv_km: Vec<ArmTimePvalue>,
    #[serde(rename = "B")]
    pub b: usize,
}

struct DrawIndicators {
    ks: bool,
    aa: Vec<bool>,
    km: [Vec<bool>; 2],
}

/// Posterior predictive p-values over the paired parameter draws and imputations.
pub fn run_ppc(
    data: &[SubjectRecord],
    params: &[ModelParams],
    imputed: &[ImputedDraw],
    grid: &TimeGrid,
    c_admin: Option<f64>,
    seed: u64,
) -> Result<PpcReport> {
    if params.is_empty() || params.len() != imputed.len() {
        return Err(Error::domain("PPC needs one imputation per parameter draw"));
    }
    let censoring = censoring_times(data, c_admin);
    let observed_km = [km_arm(data, Arm::Control, grid)?, km_arm(data, Arm::Treated, grid)?];
    let indicators: Result<Vec<DrawIndicators>> = params
        .par_iter()
        .zip(imputed.par_iter())
        .enumerate()
        .map(|(b, (p, imp))| {
            let mut r = rng::stream(seed, "ppc", b as u64);
            let rep = generate_replicate(data, p, &censoring, &mut r)?;
            Ok(DrawIndicators {
                ks: discrepancy_ks(&imp.gamma, &rep.gamma, p.sigma)?,
                aa: discrepancy_aa(&imp.outcomes, &rep.outcomes, grid),
                km: [
                    discrepancy_km(&observed_km[0], &rep.records, Arm::Control, grid)?,
                    discrepancy_km(&observed_km[1], &rep.records, Arm::Treated, grid)?,
                ],
            })
        })
        .collect();
    let ind = indicators?;
    let b = ind.len() as f64;
    let mean = |f: &dyn Fn(&DrawIndicators) -> bool| ind.iter().filter(|d| f(d)).count() as f64 / b;
    let times = grid.times();
    Ok(PpcReport {
        pppv_ks: 1.0 - mean(&|d| d.ks),
        pppv_aa: times
            .iter()
            .enumerate()
            .map(|(k, &t)| TimePvalue { t, p: mean(&|d| d.aa[k]) })
            .collect(),
        pppv_km: (0..2)
            .flat_map(|z| {
                let mean = &mean;
                times.iter().enumerate().map(move |(k, &t)| ArmTimePvalue {
                    z: z as u8,
                    t,
                    p: mean(&|d| d.km[z][k]),
                })
            })
            .collect(),
        b: ind.len(),
    })
}
