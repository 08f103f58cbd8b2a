//! Posterior sampling with adaptive NUTS and convergence diagnostics.

mod adapt;
mod diagnostics;
mod nuts;

pub use diagnostics::{ess, rank_normalized_split_rhat, split_rhat};
pub use nuts::{TransitionInfo, MAX_DELTA_H};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::MarginalLikelihood;
use crate::model::{ModelParams, ParamLayout, SubjectRecord, UnconstrainedParams};
use crate::priors::{log_prior_and_grad, PriorSpec};
use crate::rng;
use adapt::{DualAveraging, WindowedMetric};
use nuts::{Integrator, PhasePoint};

/// Unnormalized log density on an unconstrained space.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Log density at `q`; writes the gradient into `grad`. Non-finite
    /// values are treated as zero density.
    fn log_density_and_grad(&self, q: &[f64], grad: &mut [f64]) -> f64;
}

/// Marginal log-likelihood plus log prior.
#[derive(Debug, Clone)]
pub struct Posterior {
    likelihood: MarginalLikelihood,
    moments: Vec<(f64, f64)>,
}

impl Posterior {
    pub fn new(data: &[SubjectRecord], spec: &PriorSpec) -> Result<Self> {
        spec.validate()?;
        let likelihood = MarginalLikelihood::new(data)?;
        let moments = spec.coordinate_moments(&likelihood.layout());
        Ok(Posterior { likelihood, moments })
    }

    pub fn layout(&self) -> ParamLayout {
        self.likelihood.layout()
    }
}

impl LogDensity for Posterior {
    fn dim(&self) -> usize {
        self.likelihood.layout().dim()
    }

    fn log_density_and_grad(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        let ll = self.likelihood.value_and_grad(q, grad);
        ll + log_prior_and_grad(q, &self.moments, grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub n_chains: usize,
    /// Total iterations per chain, warmup included.
    pub n_iter: usize,
    pub n_warmup: usize,
    pub max_tree_depth: usize,
    pub target_accept: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_chains: 4,
            n_iter: 4000,
            n_warmup: 3000,
            max_tree_depth: 10,
            target_accept: 0.8,
            seed: 20240101,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains < 1 {
            return Err(Error::config("n_chains must be at least 1"));
        }
        if self.n_warmup >= self.n_iter {
            return Err(Error::config(format!(
                "n_warmup ({}) must be smaller than n_iter ({})",
                self.n_warmup, self.n_iter
            )));
        }
        if self.max_tree_depth < 1 {
            return Err(Error::config("max_tree_depth must be at least 1"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::config("target_accept must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn draws_per_chain(&self) -> usize {
        self.n_iter - self.n_warmup
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub chain: usize,
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
    pub n_divergent: usize,
    pub mean_accept_stat: f64,
    /// Mean acceptance statistic over the warmup iterations since the last
    /// step-size restart, the quantity dual averaging drives to its target.
    pub adapt_accept_stat: f64,
    pub mean_tree_depth: f64,
    pub n_leapfrog: usize,
}

/// Retained draws of all chains, row-major on the unconstrained scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub dim: usize,
    pub values: Vec<f64>,
    pub chain_id: Vec<usize>,
    /// Post-warmup iteration index within the chain, from 0.
    pub iter: Vec<usize>,
    pub log_post: Vec<f64>,
    pub divergent: Vec<bool>,
    pub accept_stat: Vec<f64>,
    pub chains: Vec<ChainSummary>,
}

impl PosteriorDraws {
    pub fn n_draws(&self) -> usize {
        self.chain_id.len()
    }

    pub fn n_chains(&self) -> usize {
        self.chain_id.iter().max().map_or(0, |c| c + 1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn unconstrained(&self, i: usize) -> UnconstrainedParams {
        UnconstrainedParams(self.row(i).to_vec())
    }

    pub fn params(&self, i: usize) -> ModelParams {
        ParamLayout::new((self.dim - 13) / 6).constrain(self.row(i))
    }

    pub fn n_divergent(&self) -> usize {
        self.divergent.iter().filter(|d| **d).count()
    }

    /// One coordinate split by chain, using `f` to map the unconstrained row.
    pub fn chain_series(&self, f: impl Fn(&[f64]) -> f64) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.n_chains()];
        for i in 0..self.n_draws() {
            out[self.chain_id[i]].push(f(self.row(i)));
        }
        out
    }
}

/// Split R-hat of unconstrained coordinate `param_index`.
pub fn gelman_rubin(draws: &PosteriorDraws, param_index: usize) -> Result<f64> {
    check_index(draws, param_index)?;
    split_rhat(&draws.chain_series(|r| r[param_index]))
}

/// Combined-chain effective sample size of unconstrained coordinate `param_index`.
pub fn effective_sample_size(draws: &PosteriorDraws, param_index: usize) -> Result<f64> {
    check_index(draws, param_index)?;
    ess(&draws.chain_series(|r| r[param_index]))
}

fn check_index(draws: &PosteriorDraws, k: usize) -> Result<()> {
    if k >= draws.dim {
        return Err(Error::domain(format!("parameter index {k} out of range 0..{}", draws.dim)));
    }
    Ok(())
}

struct ChainOutput {
    draws: Vec<Vec<f64>>,
    log_post: Vec<f64>,
    divergent: Vec<bool>,
    accept: Vec<f64>,
    summary: ChainSummary,
}

const MAX_INIT_TRIES: usize = 100;

fn initialize<T: LogDensity + ?Sized, R: Rng + ?Sized>(target: &T, rng: &mut R) -> Result<PhasePoint> {
    for _ in 0..MAX_INIT_TRIES {
        let q: Vec<f64> = (0..target.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let z = PhasePoint::new(target, q);
        if z.logp.is_finite() && z.grad.iter().all(|g| g.is_finite()) {
            return Ok(z);
        }
    }
    Err(Error::numerical(format!(
        "no initial point with finite log posterior after {MAX_INIT_TRIES} attempts"
    )))
}

fn run_chain<T: LogDensity + ?Sized>(target: &T, cfg: &SamplerConfig, chain: usize) -> Result<ChainOutput> {
    let mut rng = rng::stream(cfg.seed, "nuts-chain", chain as u64);
    let dim = target.dim();
    let mut z = initialize(target, &mut rng)?;
    let mut inv_metric = vec![1.0; dim];
    let mut step = {
        let mut it = Integrator { target, inv_metric: &inv_metric, step_size: 1.0 };
        it.find_reasonable_step_size(&z, &mut rng)
    };
    let mut da = DualAveraging::new(cfg.target_accept, step);
    let mut window = WindowedMetric::new(dim, cfg.n_warmup);
    let (mut adapt_sum, mut adapt_n) = (0.0, 0usize);

    for _ in 0..cfg.n_warmup {
        let info = Integrator { target, inv_metric: &inv_metric, step_size: step }.transition(&mut z, cfg.max_tree_depth, &mut rng);
        step = da.update(info.accept_stat);
        adapt_sum += info.accept_stat;
        adapt_n += 1;
        if let Some(var) = window.observe(&z.q) {
            inv_metric = var;
            let mut it = Integrator { target, inv_metric: &inv_metric, step_size: step };
            step = it.find_reasonable_step_size(&z, &mut rng);
            da.restart(step);
            (adapt_sum, adapt_n) = (0.0, 0);
        }
    }
    if cfg.n_warmup > 0 {
        step = da.final_step_size();
    }

    let keep = cfg.draws_per_chain();
    let mut out = ChainOutput {
        draws: Vec::with_capacity(keep),
        log_post: Vec::with_capacity(keep),
        divergent: Vec::with_capacity(keep),
        accept: Vec::with_capacity(keep),
        summary: ChainSummary {
            chain,
            step_size: step,
            inv_metric: inv_metric.clone(),
            n_divergent: 0,
            mean_accept_stat: 0.0,
            adapt_accept_stat: if adapt_n > 0 { adapt_sum / adapt_n as f64 } else { f64::NAN },
            mean_tree_depth: 0.0,
            n_leapfrog: 0,
        },
    };
    let it = Integrator { target, inv_metric: &inv_metric, step_size: step };
    let mut depth_sum = 0usize;
    for _ in 0..keep {
        let info = it.transition(&mut z, cfg.max_tree_depth, &mut rng);
        out.draws.push(z.q.clone());
        out.log_post.push(z.logp);
        out.divergent.push(info.divergent);
        out.accept.push(info.accept_stat);
        depth_sum += info.tree_depth;
        out.summary.n_leapfrog += info.n_leapfrog;
    }
    out.summary.n_divergent = out.divergent.iter().filter(|d| **d).count();
    out.summary.mean_accept_stat = out.accept.iter().sum::<f64>() / keep as f64;
    out.summary.mean_tree_depth = depth_sum as f64 / keep as f64;
    if out.summary.n_divergent > 0 {
        log::warn!("chain {chain}: {} divergent transitions after warmup", out.summary.n_divergent);
    }
    Ok(out)
}

/// Runs `cfg.n_chains` independent chains on the rayon pool.
pub fn sample<T: LogDensity + ?Sized>(target: &T, cfg: &SamplerConfig) -> Result<PosteriorDraws> {
    cfg.validate()?;
    let outputs: Result<Vec<ChainOutput>> = (0..cfg.n_chains).into_par_iter().map(|c| run_chain(target, cfg, c)).collect();
    let outputs = outputs?;
    let dim = target.dim();
    let total = cfg.n_chains * cfg.draws_per_chain();
    let mut d = PosteriorDraws {
        dim,
        values: Vec::with_capacity(total * dim),
        chain_id: Vec::with_capacity(total),
        iter: Vec::with_capacity(total),
        log_post: Vec::with_capacity(total),
        divergent: Vec::with_capacity(total),
        accept_stat: Vec::with_capacity(total),
        chains: Vec::with_capacity(cfg.n_chains),
    };
    for o in outputs {
        for (i, q) in o.draws.iter().enumerate() {
            d.values.extend_from_slice(q);
            d.chain_id.push(o.summary.chain);
            d.iter.push(i);
        }
        d.log_post.extend(o.log_post);
        d.divergent.extend(o.divergent);
        d.accept_stat.extend(o.accept);
        d.chains.push(o.summary);
    }
    Ok(d)
}

/// Draws from the posterior of the illness-death model.
pub fn sample_posterior(data: &[SubjectRecord], spec: &PriorSpec, cfg: &SamplerConfig) -> Result<PosteriorDraws> {
    let posterior = Posterior::new(data, spec)?;
    sample(&posterior, cfg)
}

#[cfg(test)]
pub(crate) mod test_targets {
    use super::LogDensity;

    /// Independent normals with common sd.
    pub struct IsoGaussian {
        pub dim: usize,
        pub sd: f64,
    }

    impl LogDensity for IsoGaussian {
        fn dim(&self) -> usize {
            self.dim
        }

        fn log_density_and_grad(&self, q: &[f64], grad: &mut [f64]) -> f64 {
            let v = self.sd * self.sd;
            let mut lp = 0.0;
            for (g, x) in grad.iter_mut().zip(q) {
                lp -= 0.5 * x * x / v;
                *g = -x / v;
            }
            lp
        }
    }
}
