//! Survivor average causal effects on the always-alive cohort, principal
//! state proportions, and covariate-profile predictions.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma as GammaDist};

use crate::error::{Error, Result};
use crate::imputation::{simulate_arm, ImputedDraw};
use crate::model::{Arm, ModelParams, NonterminalTime, PotentialOutcomeSet, PrincipalState, SubjectRecord};
use crate::rng;

/// Strictly increasing positive evaluation times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    /// Validates positivity and strict ordering, and `t_K <= upper` when given.
    pub fn new(times: Vec<f64>, upper: Option<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::domain("time grid is empty"));
        }
        if times.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::domain("time grid points must be positive and finite"));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::domain("time grid must be strictly increasing"));
        }
        if let Some(u) = upper {
            let last = *times.last().unwrap();
            if last > u {
                return Err(Error::domain(format!(
                    "last grid point {last} exceeds the largest observed nonterminal time {u}"
                )));
            }
        }
        Ok(TimeGrid { times })
    }

    /// `k` equally spaced points ending at `t_max`.
    pub fn uniform(t_max: f64, k: usize, upper: Option<f64>) -> Result<Self> {
        if k == 0 {
            return Err(Error::domain("grid size must be positive"));
        }
        Self::new((1..=k).map(|i| t_max * i as f64 / k as f64).collect(), upper)
    }

    /// Unit-spaced `1..=90` when the largest `y_r` lies in `[90, 365]` (a day
    /// scale), otherwise 50 equal-probability quantiles of `y_r`.
    pub fn default_for(data: &[SubjectRecord]) -> Result<Self> {
        let mut y: Vec<f64> = data.iter().map(|s| s.y_r).collect();
        if y.is_empty() {
            return Err(Error::data("dataset is empty"));
        }
        y.sort_by(f64::total_cmp);
        let max = *y.last().unwrap();
        if (90.0..=365.0).contains(&max) {
            return Self::new((1..=90).map(f64::from).collect(), Some(max));
        }
        let mut times: Vec<f64> = (1..=50).map(|k| quantile_sorted(&y, k as f64 / 50.0)).collect();
        times.dedup();
        times.retain(|t| *t > 0.0);
        Self::new(times, Some(max))
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn check_order(r: f64, t: f64) -> Result<()> {
    if r > t {
        return Err(Error::domain(format!("r = {r} must not exceed t = {t}")));
    }
    Ok(())
}

fn always_alive(po: &PotentialOutcomeSet, t: f64) -> bool {
    po.t0 > t && po.t1 > t
}

/// TV-SACE(r, t) for one set of potential outcomes; `None` if nobody is always alive at `t`.
pub fn tv_sace_draw(outcomes: &[PotentialOutcomeSet], r: f64, t: f64) -> Result<Option<f64>> {
    check_order(r, t)?;
    let (mut n, mut c1, mut c0) = (0usize, 0usize, 0usize);
    for po in outcomes.iter().filter(|po| always_alive(po, t)) {
        n += 1;
        c1 += po.r1.occurred_before(r) as usize;
        c0 += po.r0.occurred_before(r) as usize;
    }
    Ok((n > 0).then(|| c1 as f64 / n as f64 - c0 as f64 / n as f64))
}

/// RM-SACE(r, t) for one set of potential outcomes; `None` if nobody is always alive at `t`.
pub fn rm_sace_draw(outcomes: &[PotentialOutcomeSet], r: f64, t: f64) -> Result<Option<f64>> {
    check_order(r, t)?;
    let (mut n, mut s1, mut s0) = (0usize, 0.0, 0.0);
    for po in outcomes.iter().filter(|po| always_alive(po, t)) {
        n += 1;
        s1 += po.r1.restricted(r);
        s0 += po.r0.restricted(r);
    }
    Ok((n > 0).then(|| s1 / n as f64 - s0 / n as f64))
}

/// Snapshot effect `P(R(1) < t | AA) - P(R(0) < t | AA)` at `t`.
pub fn snapshot_tv(outcomes: &[PotentialOutcomeSet], t: f64) -> Option<f64> {
    let aa: Vec<&PotentialOutcomeSet> = outcomes.iter().filter(|po| po.t0 > t && po.t1 > t).collect();
    if aa.is_empty() {
        return None;
    }
    let n = aa.len() as f64;
    let p = |f: fn(&PotentialOutcomeSet) -> NonterminalTime| {
        aa.iter().filter(|po| f(po).time().is_some_and(|v| v < t)).count() as f64 / n
    };
    Some(p(|po| po.r1) - p(|po| po.r0))
}

/// Snapshot restricted-mean effect `E[min(R(1), t) | AA] - E[min(R(0), t) | AA]`.
pub fn snapshot_rm(outcomes: &[PotentialOutcomeSet], t: f64) -> Option<f64> {
    let aa: Vec<&PotentialOutcomeSet> = outcomes.iter().filter(|po| po.t0 > t && po.t1 > t).collect();
    if aa.is_empty() {
        return None;
    }
    let n = aa.len() as f64;
    let m = |f: fn(&PotentialOutcomeSet) -> NonterminalTime| {
        aa.iter().map(|po| f(po).time().map_or(t, |v| v.min(t))).sum::<f64>() / n
    };
    Some(m(|po| po.r1) - m(|po| po.r0))
}

/// Proportions of AA, TK, CK, DD at `t`.
pub fn state_proportions(outcomes: &[PotentialOutcomeSet], t: f64) -> [f64; 4] {
    let mut counts = [0usize; 4];
    for po in outcomes {
        counts[PrincipalState::from_death_times(po.t0, po.t1, t).index()] += 1;
    }
    let n = outcomes.len() as f64;
    counts.map(|c| c as f64 / n)
}

/// Fraction alive at `t` under each arm.
pub fn arm_survival(outcomes: &[PotentialOutcomeSet], t: f64) -> [f64; 2] {
    let n = outcomes.len() as f64;
    let s0 = outcomes.iter().filter(|po| po.t0 > t).count() as f64 / n;
    let s1 = outcomes.iter().filter(|po| po.t1 > t).count() as f64 / n;
    [s0, s1]
}

/// All estimands of one draw on the lower triangle `r_j <= t_k` of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawGrid {
    /// `tv[k][j]` for `j <= k`.
    pub tv: Vec<Vec<Option<f64>>>,
    pub rm: Vec<Vec<Option<f64>>>,
    pub states: Vec<[f64; 4]>,
    pub survival: Vec<[f64; 2]>,
    pub n_aa: Vec<usize>,
}

impl DrawGrid {
    pub fn q(&self, k: usize) -> Option<f64> {
        self.tv[k][k]
    }

    pub fn m(&self, k: usize) -> Option<f64> {
        self.rm[k][k]
    }
}

/// Lower-triangle estimands for one draw. Sums run over always-alive units
/// in index order, so each cell equals the corresponding direct evaluation.
pub fn draw_grid(outcomes: &[PotentialOutcomeSet], grid: &TimeGrid) -> DrawGrid {
    let times = grid.times();
    let mut out = DrawGrid {
        tv: Vec::with_capacity(times.len()),
        rm: Vec::with_capacity(times.len()),
        states: Vec::with_capacity(times.len()),
        survival: Vec::with_capacity(times.len()),
        n_aa: Vec::with_capacity(times.len()),
    };
    for (k, &t) in times.iter().enumerate() {
        let rs = &times[..=k];
        let mut count = vec![[0usize; 2]; rs.len()];
        let mut sum = vec![[0.0f64; 2]; rs.len()];
        let mut n = 0usize;
        for po in outcomes.iter().filter(|po| always_alive(po, t)) {
            n += 1;
            for (j, &r) in rs.iter().enumerate() {
                count[j][1] += po.r1.occurred_before(r) as usize;
                count[j][0] += po.r0.occurred_before(r) as usize;
                sum[j][1] += po.r1.restricted(r);
                sum[j][0] += po.r0.restricted(r);
            }
        }
        let nf = n as f64;
        out.tv.push(
            count
                .iter()
                .map(|c| (n > 0).then(|| c[1] as f64 / nf - c[0] as f64 / nf))
                .collect(),
        );
        out.rm.push(sum.iter().map(|s| (n > 0).then(|| s[1] / nf - s[0] / nf)).collect());
        out.states.push(state_proportions(outcomes, t));
        out.survival.push(arm_survival(outcomes, t));
        out.n_aa.push(n);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub lo95: f64,
    pub hi95: f64,
    pub n_draws_defined: usize,
}

/// Type-7 quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty sample");
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean, median and central 95% interval of the defined values.
pub fn summarize(values: impl IntoIterator<Item = Option<f64>>) -> Option<Summary> {
    let mut v: Vec<f64> = values.into_iter().flatten().collect();
    if v.is_empty() {
        return None;
    }
    // shifting by the first value keeps the mean of identical draws exact
    let shift = v[0];
    let mean = shift + v.iter().map(|x| x - shift).sum::<f64>() / v.len() as f64;
    v.sort_by(f64::total_cmp);
    Some(Summary {
        mean,
        median: quantile_sorted(&v, 0.5),
        lo95: quantile_sorted(&v, 0.025),
        hi95: quantile_sorted(&v, 0.975),
        n_draws_defined: v.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Estimand {
    #[serde(rename = "tv_sace")]
    TvSace,
    #[serde(rename = "rm_sace")]
    RmSace,
}

impl Estimand {
    pub fn name(self) -> &'static str {
        match self {
            Estimand::TvSace => "tv_sace",
            Estimand::RmSace => "rm_sace",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub estimand: Estimand,
    pub r: f64,
    pub t: f64,
    pub summary: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    pub t: f64,
    /// Posterior summaries of the AA, TK, CK, DD proportions.
    pub states: [Summary; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimandGrid {
    pub times: Vec<f64>,
    pub cells: Vec<Cell>,
    pub states: Vec<StateSummary>,
    /// Posterior summaries of the arm-specific alive fractions.
    pub survival: Vec<[Summary; 2]>,
}

impl EstimandGrid {
    pub fn cell(&self, estimand: Estimand, j: usize, k: usize) -> &Cell {
        let per_t: usize = (0..k).map(|i| i + 1).sum();
        let idx = 2 * per_t + 2 * j + if estimand == Estimand::TvSace { 0 } else { 1 };
        &self.cells[idx]
    }

    /// `Q(t_k) = TV-SACE(t_k, t_k)`.
    pub fn q(&self, k: usize) -> &Cell {
        self.cell(Estimand::TvSace, k, k)
    }

    /// `M(t_k) = RM-SACE(t_k, t_k)`.
    pub fn m(&self, k: usize) -> &Cell {
        self.cell(Estimand::RmSace, k, k)
    }
}

fn summarize_all(values: &[f64]) -> Summary {
    summarize(values.iter().map(|v| Some(*v))).expect("nonempty")
}

/// Posterior summaries over per-draw grids.
pub fn summarize_draw_grids(grids: &[DrawGrid], grid: &TimeGrid) -> Result<EstimandGrid> {
    if grid.is_empty() {
        return Err(Error::domain("time grid is empty"));
    }
    if grids.is_empty() {
        return Err(Error::domain("no posterior draws to summarize"));
    }
    let times = grid.times();
    let mut cells = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        for (j, &r) in times[..=k].iter().enumerate() {
            cells.push(Cell {
                estimand: Estimand::TvSace,
                r,
                t,
                summary: summarize(grids.iter().map(|g| g.tv[k][j])),
            });
            cells.push(Cell {
                estimand: Estimand::RmSace,
                r,
                t,
                summary: summarize(grids.iter().map(|g| g.rm[k][j])),
            });
        }
    }
    let states = times
        .iter()
        .enumerate()
        .map(|(k, &t)| StateSummary {
            t,
            states: std::array::from_fn(|s| summarize_all(&grids.iter().map(|g| g.states[k][s]).collect::<Vec<_>>())),
        })
        .collect();
    let survival = (0..times.len())
        .map(|k| std::array::from_fn(|z| summarize_all(&grids.iter().map(|g| g.survival[k][z]).collect::<Vec<_>>())))
        .collect();
    Ok(EstimandGrid {
        times: times.to_vec(),
        cells,
        states,
        survival,
    })
}

/// Per-draw grids and their posterior summary.
pub fn summarize_grid(draws: &[ImputedDraw], grid: &TimeGrid) -> Result<(Vec<DrawGrid>, EstimandGrid)> {
    let grids: Vec<DrawGrid> = draws.par_iter().map(|d| draw_grid(&d.outcomes, grid)).collect();
    let summary = summarize_draw_grids(&grids, grid)?;
    Ok((grids, summary))
}

/// Frailty level at which a covariate profile is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FrailtyLevel {
    /// `gamma = 1`, the frailty mean.
    Average,
    /// A quantile of the `Gamma(1/sigma, 1/sigma)` frailty law.
    Quantile(f64),
}

impl FrailtyLevel {
    pub fn gamma(self, sigma: f64) -> Result<f64> {
        match self {
            FrailtyLevel::Average => Ok(1.0),
            FrailtyLevel::Quantile(p) => {
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::domain(format!("frailty quantile level {p} must lie in (0, 1)")));
                }
                Ok(frailty_quantile(sigma, p)?)
            }
        }
    }
}

/// Quantile of the mean-one gamma frailty law with variance `sigma`.
pub fn frailty_quantile(sigma: f64, p: f64) -> Result<f64> {
    let a = 1.0 / sigma;
    let g = GammaDist::new(a, a).map_err(|e| Error::domain(format!("frailty law with variance {sigma}: {e}")))?;
    Ok(g.inverse_cdf(p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub t: f64,
    /// Probabilities of AA, TK, CK, DD.
    pub states: [f64; 4],
    /// `Q(t)` among always-alive replicates; `None` if none survived.
    pub tv_sace: Option<f64>,
    /// `M(t)` among always-alive replicates.
    pub rm_sace: Option<f64>,
}

/// Posterior predictive state probabilities and snapshot effects for a
/// covariate profile at a fixed frailty level. Counts are pooled over all
/// draws and `n_rep` replicates per draw.
pub fn profile_prediction(
    x_new: &[f64],
    level: FrailtyLevel,
    draws: &[ModelParams],
    grid: &TimeGrid,
    n_rep: usize,
    seed: u64,
) -> Result<Vec<ProfilePoint>> {
    if draws.is_empty() || n_rep == 0 {
        return Err(Error::domain("profile prediction needs draws and replicates"));
    }
    let times = grid.times();
    let kt = times.len();
    #[derive(Clone)]
    struct Acc {
        states: Vec<[u64; 4]>,
        n_aa: Vec<u64>,
        tv: Vec<i64>,
        rm: Vec<f64>,
    }
    let zero = || Acc {
        states: vec![[0; 4]; kt],
        n_aa: vec![0; kt],
        tv: vec![0; kt],
        rm: vec![0.0; kt],
    };
    let per_draw: Result<Vec<Acc>> = draws
        .par_iter()
        .enumerate()
        .map(|(b, params)| {
            if x_new.len() != params.p() {
                return Err(Error::domain(format!(
                    "profile has {} covariates, model has {}",
                    x_new.len(),
                    params.p()
                )));
            }
            let gamma = level.gamma(params.sigma)?;
            let mut rng = rng::stream(seed, "profile", b as u64);
            let mut acc = zero();
            for _ in 0..n_rep {
                let po = simulate_pair(x_new, gamma, params, &mut rng);
                for (k, &t) in times.iter().enumerate() {
                    let s = PrincipalState::from_death_times(po.t0, po.t1, t);
                    acc.states[k][s.index()] += 1;
                    if s == PrincipalState::AlwaysAlive {
                        acc.n_aa[k] += 1;
                        acc.tv[k] += po.r1.occurred_before(t) as i64 - po.r0.occurred_before(t) as i64;
                        acc.rm[k] += po.r1.restricted(t) - po.r0.restricted(t);
                    }
                }
            }
            Ok(acc)
        })
        .collect();
    let per_draw = per_draw?;
    let mut total = zero();
    for a in &per_draw {
        for k in 0..kt {
            for s in 0..4 {
                total.states[k][s] += a.states[k][s];
            }
            total.n_aa[k] += a.n_aa[k];
            total.tv[k] += a.tv[k];
            total.rm[k] += a.rm[k];
        }
    }
    let n = (draws.len() * n_rep) as f64;
    Ok((0..kt)
        .map(|k| {
            let aa = total.n_aa[k] as f64;
            ProfilePoint {
                t: times[k],
                states: total.states[k].map(|c| c as f64 / n),
                tv_sace: (total.n_aa[k] > 0).then(|| total.tv[k] as f64 / aa),
                rm_sace: (total.n_aa[k] > 0).then(|| total.rm[k] / aa),
            }
        })
        .collect())
}

/// Both arms' potential outcomes at a shared frailty.
pub fn simulate_pair<R: Rng + ?Sized>(x: &[f64], gamma: f64, params: &ModelParams, rng: &mut R) -> PotentialOutcomeSet {
    let o0 = simulate_arm(Arm::Control, x, gamma, params, rng);
    let o1 = simulate_arm(Arm::Treated, x, gamma, params, rng);
    PotentialOutcomeSet::from_arms(Arm::Control, o0, o1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NonterminalTime::{At, Undefined};

    fn po(r0: crate::model::NonterminalTime, t0: f64, r1: crate::model::NonterminalTime, t1: f64) -> PotentialOutcomeSet {
        PotentialOutcomeSet { r0, t0, r1, t1 }
    }

    #[test]
    fn tv_two_subject_example() {
        let o = [po(At(30.0), 100.0, At(10.0), 100.0), po(At(40.0), 100.0, At(20.0), 100.0)];
        assert_eq!(tv_sace_draw(&o, 25.0, 50.0).unwrap(), Some(1.0));
        let same = [po(At(30.0), 100.0, At(30.0), 100.0)];
        assert_eq!(tv_sace_draw(&same, 35.0, 50.0).unwrap(), Some(0.0));
        assert!(tv_sace_draw(&o, 60.0, 50.0).is_err());
    }

    #[test]
    fn rm_single_subject_example() {
        let o = [po(At(30.0), 100.0, At(10.0), 100.0)];
        assert_eq!(rm_sace_draw(&o, 25.0, 50.0).unwrap(), Some(-15.0));
        let o = [po(Undefined, 100.0, At(10.0), 100.0)];
        assert_eq!(rm_sace_draw(&o, 25.0, 50.0).unwrap(), Some(-15.0));
    }

    #[test]
    fn empty_cohort_is_none() {
        let o = [po(Undefined, 5.0, Undefined, 100.0)];
        assert_eq!(tv_sace_draw(&o, 5.0, 10.0).unwrap(), None);
        assert_eq!(rm_sace_draw(&o, 5.0, 10.0).unwrap(), None);
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(vec![1.0, 2.0, 3.0], Some(3.0)).is_ok());
        assert!(TimeGrid::new(vec![1.0, 1.0], None).is_err());
        assert!(TimeGrid::new(vec![0.0, 1.0], None).is_err());
        assert!(TimeGrid::new(vec![1.0, 4.0], Some(3.0)).is_err());
        assert!(TimeGrid::new(vec![], None).is_err());
        let g = TimeGrid::uniform(2.0, 4, None).unwrap();
        assert_eq!(g.times(), &[0.5, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn type7_quantiles_by_hand() {
        let draws = [Some(3.0), Some(1.0), None, Some(2.0)];
        let s = summarize(draws).unwrap();
        assert_eq!(s.n_draws_defined, 3);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.median, 2.0);
        // h = 2 * 0.025 = 0.05 -> 1 + 0.05 * (2 - 1)
        assert!((s.lo95 - 1.05).abs() < 1e-15);
        // h = 2 * 0.975 = 1.95 -> 2 + 0.95 * (3 - 2)
        assert!((s.hi95 - 2.95).abs() < 1e-15);
        let c = summarize([Some(0.4); 5]).unwrap();
        assert_eq!((c.mean, c.median, c.lo95, c.hi95), (0.4, 0.4, 0.4, 0.4));
    }

    #[test]
    fn grid_cells_equal_direct_evaluation() {
        let o = [
            po(At(1.0), 6.0, At(0.5), 7.0),
            po(Undefined, 3.5, At(2.5), 8.0),
            po(At(4.2), 9.0, Undefined, 1.2),
            po(At(0.2), 5.0, At(3.1), 5.5),
            po(Undefined, 10.0, Undefined, 10.0),
        ];
        let grid = TimeGrid::new(vec![0.6, 1.5, 3.0, 4.5], None).unwrap();
        let g = draw_grid(&o, &grid);
        for (k, &t) in grid.times().iter().enumerate() {
            for (j, &r) in grid.times()[..=k].iter().enumerate() {
                assert_eq!(g.tv[k][j], tv_sace_draw(&o, r, t).unwrap());
                assert_eq!(g.rm[k][j], rm_sace_draw(&o, r, t).unwrap());
            }
            assert_eq!(g.q(k), snapshot_tv(&o, t));
            assert_eq!(g.m(k), snapshot_rm(&o, t));
            assert!((g.states[k].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let summary = summarize_draw_grids(&[g.clone(), g], &grid).unwrap();
        assert_eq!(summary.q(2).r, 3.0);
        assert_eq!(summary.q(2).t, 3.0);
        assert_eq!(summary.m(3).estimand, Estimand::RmSace);
        assert_eq!(summary.cell(Estimand::TvSace, 1, 3).r, 1.5);
        assert_eq!(summary.cell(Estimand::TvSace, 1, 3).t, 4.5);
    }

    #[test]
    fn no_death_profile_is_always_alive() {
        let mut params = ModelParams::with_shapes([[1.0; 3]; 2], [[1.0; 3]; 2], 0.5, 1);
        for z in 0..2 {
            params.kappa[z][1] = 1e-300;
            params.kappa[z][2] = 1e-300;
        }
        let grid = TimeGrid::new(vec![0.5, 1.0, 2.0], None).unwrap();
        let pred = profile_prediction(&[0.0], FrailtyLevel::Average, &[params], &grid, 500, 1).unwrap();
        for p in pred {
            assert_eq!(p.states[0], 1.0);
        }
    }

    #[test]
    fn frailty_quantiles_bracket_one() {
        let lo = FrailtyLevel::Quantile(0.1).gamma(1.44).unwrap();
        let hi = FrailtyLevel::Quantile(0.9).gamma(1.44).unwrap();
        assert!(lo < 1.0 && hi > 1.0);
        assert_eq!(FrailtyLevel::Average.gamma(1.44).unwrap(), 1.0);
        assert!(FrailtyLevel::Quantile(1.0).gamma(1.0).is_err());
    }
}
