//! Run configuration: a TOML file merged with command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use semicomp::estimands::TimeGrid;
use semicomp::model::{ModelParams, SubjectRecord};
use semicomp::priors::{derive_hyperparams, PriorSpec, SigmaPrior};
use semicomp::sampler::SamplerConfig;
use semicomp::simulate::{Assignment, Censoring, CovariateSpec, FrailtyLaw, SimConfig};
use semicomp::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub data: DataConfig,
    pub preprocess: PreprocessConfig,
    pub prior: PriorOverrides,
    pub sampler: SamplerSection,
    pub grid: GridConfig,
    pub estimate: EstimateConfig,
    pub ppc: PpcConfig,
    pub simulate: Option<SimulateConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 20240101,
            out: PathBuf::from("out"),
            data: DataConfig::default(),
            preprocess: PreprocessConfig::default(),
            prior: PriorOverrides::default(),
            sampler: SamplerSection::default(),
            grid: GridConfig::default(),
            estimate: EstimateConfig::default(),
            ppc: PpcConfig::default(),
            simulate: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Observed data; defaults to `<out>/data.csv`.
    pub input: Option<PathBuf>,
    /// Covariate columns; every extra column when absent.
    pub covariates: Option<Vec<String>>,
    /// Covariates divided by their standard deviation after centering.
    pub scale: Vec<String>,
    /// Analyse `<out>/matched.csv` instead of `input`.
    pub use_matched: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Largest allowed propensity difference within a matched pair.
    pub caliper: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorOverrides {
    pub beta_sd: Option<f64>,
    pub kappa_prior_mean: Option<[f64; 3]>,
    pub kappa_prior_sd: Option<f64>,
    pub alpha_log_sd: Option<f64>,
    pub sigma_log_mean: Option<f64>,
    pub sigma_log_sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub chains: usize,
    pub iter: usize,
    pub warmup: usize,
    pub max_tree_depth: usize,
    pub target_accept: f64,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let d = SamplerConfig::default();
        SamplerSection {
            chains: d.n_chains,
            iter: d.n_iter,
            warmup: d.n_warmup,
            max_tree_depth: d.max_tree_depth,
            target_accept: d.target_accept,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub times: Option<Vec<f64>>,
    pub max: Option<f64>,
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    /// Posterior draws used for imputation, evenly spaced; 0 keeps all.
    pub draws: usize,
    pub potential_outcomes: bool,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            draws: 200,
            potential_outcomes: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpcConfig {
    pub enabled: bool,
    /// Administrative censoring time applied to replicates.
    pub c_admin: Option<f64>,
}

impl Default for PpcConfig {
    fn default() -> Self {
        PpcConfig {
            enabled: true,
            c_admin: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub n: usize,
    pub params: ModelParams,
    #[serde(default)]
    pub covariates: Vec<CovariateSpec>,
    #[serde(default = "default_assignment")]
    pub assignment: Assignment,
    #[serde(default)]
    pub censoring: Censoring,
    #[serde(default)]
    pub frailty: FrailtyLaw,
}

fn default_assignment() -> Assignment {
    Assignment::Randomized { p: 0.5 }
}

/// Flag values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub chains: Option<usize>,
    pub iter: Option<usize>,
    pub warmup: Option<usize>,
    pub grid: Option<Vec<f64>>,
    pub grid_max: Option<f64>,
    pub grid_k: Option<usize>,
    pub draws: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, o: &Overrides) -> Result<RunConfig> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = o.seed {
            cfg.seed = v;
        }
        if let Some(v) = &o.out {
            cfg.out = v.clone();
        }
        if let Some(v) = &o.input {
            cfg.data.input = Some(v.clone());
            cfg.data.use_matched = false;
        }
        if let Some(v) = o.chains {
            cfg.sampler.chains = v;
        }
        if let Some(v) = o.iter {
            cfg.sampler.iter = v;
        }
        if let Some(v) = o.warmup {
            cfg.sampler.warmup = v;
        }
        if let Some(v) = &o.grid {
            cfg.grid = GridConfig {
                times: Some(v.clone()),
                max: None,
                k: None,
            };
        }
        if o.grid_max.is_some() || o.grid_k.is_some() {
            cfg.grid.times = None;
            cfg.grid.max = o.grid_max.or(cfg.grid.max);
            cfg.grid.k = o.grid_k.or(cfg.grid.k);
        }
        if let Some(v) = o.draws {
            cfg.estimate.draws = v;
        }
        Ok(cfg)
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Data analysed by fit, estimate, ppc and report.
    pub fn analysis_input(&self) -> PathBuf {
        if self.data.use_matched {
            return self.output("matched.csv");
        }
        self.data.input.clone().unwrap_or_else(|| self.output("data.csv"))
    }

    /// Raw data read by preprocess.
    pub fn raw_input(&self) -> PathBuf {
        self.data.input.clone().unwrap_or_else(|| self.output("data.csv"))
    }

    pub fn sampler_config(&self, seed: u64) -> Result<SamplerConfig> {
        let s = &self.sampler;
        let cfg = SamplerConfig {
            n_chains: s.chains,
            n_iter: s.iter,
            n_warmup: s.warmup,
            max_tree_depth: s.max_tree_depth,
            target_accept: s.target_accept,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Data-derived priors with the configured overrides applied.
    pub fn prior_spec(&self, data: &[SubjectRecord]) -> Result<PriorSpec> {
        let o = &self.prior;
        let mut spec = match o.kappa_prior_mean {
            Some(m) => PriorSpec::with_kappa_means(m),
            None => derive_hyperparams(data)?,
        };
        if let Some(v) = o.beta_sd {
            spec.beta_sd = v;
        }
        if let Some(v) = o.kappa_prior_sd {
            spec.kappa_prior_sd = v;
        }
        if let Some(v) = o.alpha_log_sd {
            spec.alpha_log_sd = v;
        }
        let SigmaPrior::LogNormal { mu, sd } = spec.sigma_prior;
        spec.sigma_prior = SigmaPrior::LogNormal {
            mu: o.sigma_log_mean.unwrap_or(mu),
            sd: o.sigma_log_sd.unwrap_or(sd),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn time_grid(&self, data: &[SubjectRecord]) -> Result<TimeGrid> {
        let upper = data.iter().map(|s| s.y_r).fold(0.0, f64::max);
        match (&self.grid.times, self.grid.max, self.grid.k) {
            (Some(t), _, _) => TimeGrid::new(t.clone(), Some(upper)),
            (None, Some(max), k) => TimeGrid::uniform(max, k.unwrap_or(20), Some(upper)),
            (None, None, Some(k)) => TimeGrid::uniform(upper, k, Some(upper)),
            (None, None, None) => TimeGrid::default_for(data),
        }
    }

    pub fn sim_config(&self, seed: u64) -> Result<SimConfig> {
        let s = self
            .simulate
            .as_ref()
            .ok_or_else(|| Error::Config("simulate needs a [simulate] section in the config file".into()))?;
        let cfg = SimConfig {
            n: s.n,
            params: s.params.clone(),
            covariates: s.covariates.clone(),
            assignment: s.assignment.clone(),
            censoring: s.censoring,
            frailty: s.frailty,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }
}

/// Parses `"t1,t2,..."`.
pub fn parse_grid(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("'{v}' is not a number")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_replace_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "seed = 5\n[sampler]\nchains = 2\niter = 300\nwarmup = 100\n[grid]\ntimes = [1.0, 2.0]\n").unwrap();
        let o = Overrides {
            iter: Some(600),
            grid_k: Some(4),
            ..Default::default()
        };
        let cfg = RunConfig::load(Some(&path), &o).unwrap();
        assert_eq!((cfg.seed, cfg.sampler.chains, cfg.sampler.iter), (5, 2, 600));
        assert_eq!(cfg.grid, GridConfig { times: None, max: None, k: Some(4) });
        let echo: RunConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(echo, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "[sampler]\nchain = 2\n").unwrap();
        assert!(matches!(RunConfig::load(Some(&path), &Overrides::default()), Err(Error::Config(_))));
    }

    #[test]
    fn grid_list_parses() {
        assert_eq!(parse_grid("1, 2.5,3").unwrap(), vec![1.0, 2.5, 3.0]);
        assert!(parse_grid("1,x").is_err());
    }
}
