use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use semicomp::estimands::{frailty_quantile, summarize, summarize_grid, Summary};
use semicomp::imputation::{impute_all, ImputedDraw};
use semicomp::io;
use semicomp::model::{Arm, ModelParams, ParamLayout, SubjectRecord};
use semicomp::ppc::{km_arm, run_ppc, PpcReport};
use semicomp::preprocess::preprocess;
use semicomp::rng::derive_seed;
use semicomp::sampler::{ess, sample_posterior, split_rhat, ChainSummary, PosteriorDraws};
use semicomp::simulate::simulate_dataset;
use semicomp::{Error, Result};

use crate::config::RunConfig;
use crate::report::{frailty_density, FrailtyDensity};

pub const RHAT_WARN: f64 = 1.01;
pub const ESS_WARN: f64 = 400.0;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    io::atomic_write(path, &bytes)
}

fn prepare(cfg: &RunConfig, command: &str) -> Result<()> {
    fs::create_dir_all(&cfg.out).map_err(|e| Error::Config(format!("cannot create {}: {e}", cfg.out.display())))?;
    io::atomic_write(&cfg.output(&format!("config.{command}.toml")), cfg.to_toml()?.as_bytes())
}

fn require(path: &Path, producer: &str) -> Result<()> {
    if path.is_file() {
        return Ok(());
    }
    Err(Error::InvalidData(format!("missing {}; run `{producer}` first", path.display())))
}

fn load_data(cfg: &RunConfig) -> Result<(Vec<SubjectRecord>, Vec<String>)> {
    let path = cfg.analysis_input();
    require(&path, if cfg.data.use_matched { "preprocess" } else { "simulate" })?;
    io::read_subjects(&path, cfg.data.covariates.as_deref())
}

fn load_draws(cfg: &RunConfig, covariates: &[String]) -> Result<io::DrawTable> {
    let path = cfg.output("draws.csv");
    require(&path, "fit")?;
    let table = io::read_draws(&path)?;
    if table.covariates.len() != covariates.len() {
        return Err(Error::InvalidData(format!(
            "{} was fitted with {} covariates but the data have {}",
            path.display(),
            table.covariates.len(),
            covariates.len()
        )));
    }
    Ok(table)
}

/// Evenly spaced rows, `keep = 0` meaning all of them.
pub fn thin(n: usize, keep: usize) -> Vec<usize> {
    if keep == 0 || keep >= n {
        return (0..n).collect();
    }
    (0..keep).map(|k| k * n / keep).collect()
}

fn imputations(cfg: &RunConfig, data: &[SubjectRecord], table: &io::DrawTable) -> Result<(Vec<ModelParams>, Vec<ImputedDraw>)> {
    let rows = thin(table.params.len(), cfg.estimate.draws);
    let params: Vec<ModelParams> = rows.iter().map(|&i| table.params[i].clone()).collect();
    let imputed = impute_all(data, &params, derive_seed(cfg.seed, "impute"))?;
    Ok((params, imputed))
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    prepare(cfg, "simulate")?;
    let sim = simulate_dataset(&cfg.sim_config(derive_seed(cfg.seed, "simulate"))?)?;
    let p = sim.records.first().map_or(0, |r| r.x.len());
    let names: Vec<String> = (1..=p).map(|k| format!("x{k}")).collect();
    let ids: Vec<String> = sim.records.iter().map(|r| r.id.clone()).collect();
    io::write_subjects(&cfg.output("data.csv"), &sim.records, &names)?;
    io::write_truth(&cfg.output("truth.csv"), &ids, &sim.truth, &sim.gamma)?;
    log::info!("simulated {} subjects into {}", sim.records.len(), cfg.out.display());
    Ok(())
}

pub fn preprocess_cmd(cfg: &RunConfig) -> Result<()> {
    prepare(cfg, "preprocess")?;
    let path = cfg.raw_input();
    require(&path, "simulate")?;
    let (records, covariates) = io::read_subjects(&path, cfg.data.covariates.as_deref())?;
    let scale: Vec<usize> = cfg
        .data
        .scale
        .iter()
        .map(|c| {
            covariates
                .iter()
                .position(|n| n == c)
                .ok_or_else(|| Error::Config(format!("scale column '{c}' is not a covariate")))
        })
        .collect::<Result<_>>()?;
    let (matched, report) = preprocess(&records, &covariates, &scale, cfg.preprocess.caliper)?;
    io::write_subjects(&cfg.output("matched.csv"), &matched, &covariates)?;
    write_json(&cfg.output("preprocess_report.json"), &report)?;
    log::info!("matched {} pairs", report.pairs.len());
    Ok(())
}

#[derive(Debug, Serialize)]
struct ParamDiagnostics {
    name: String,
    mean: f64,
    sd: f64,
    rhat: f64,
    ess: f64,
}

#[derive(Debug, Serialize)]
struct Diagnostics {
    n_subjects: usize,
    n_draws: usize,
    max_rhat: f64,
    min_ess: f64,
    n_divergent: usize,
    warnings: Vec<String>,
    parameters: Vec<ParamDiagnostics>,
    chains: Vec<ChainSummary>,
    prior: semicomp::priors::PriorSpec,
}

fn diagnostics(draws: &PosteriorDraws, covariates: &[String], n_subjects: usize, prior: semicomp::priors::PriorSpec) -> Diagnostics {
    let layout = ParamLayout::new(covariates.len());
    let names = layout.natural_names(covariates);
    let natural: Vec<Vec<f64>> = (0..draws.n_draws()).map(|i| layout.natural_values(draws.row(i))).collect();
    let mut warnings = Vec::new();
    let parameters: Vec<ParamDiagnostics> = names
        .into_iter()
        .enumerate()
        .map(|(k, name)| {
            let mut chains = vec![Vec::new(); draws.n_chains()];
            for (i, row) in natural.iter().enumerate() {
                chains[draws.chain_id[i]].push(row[k]);
            }
            let all: Vec<f64> = natural.iter().map(|r| r[k]).collect();
            let n = all.len() as f64;
            let mean = all.iter().sum::<f64>() / n;
            let sd = (all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
            let rhat = split_rhat(&chains).unwrap_or(f64::NAN);
            let ess = ess(&chains).unwrap_or(f64::NAN);
            ParamDiagnostics { name, mean, sd, rhat, ess }
        })
        .collect();
    let max_rhat = parameters.iter().map(|p| p.rhat).fold(f64::NEG_INFINITY, |a, b| if b.is_nan() { f64::INFINITY } else { a.max(b) });
    let min_ess = parameters.iter().map(|p| p.ess).fold(f64::INFINITY, |a, b| if b.is_nan() { 0.0 } else { a.min(b) });
    for p in &parameters {
        if !(p.rhat < RHAT_WARN) {
            warnings.push(format!("{}: R-hat {} is not below {RHAT_WARN}", p.name, p.rhat));
        }
        if !(p.ess > ESS_WARN) {
            warnings.push(format!("{}: effective sample size {} is not above {ESS_WARN}", p.name, p.ess));
        }
    }
    let n_divergent = draws.n_divergent();
    if n_divergent > 0 {
        warnings.push(format!("{n_divergent} divergent transitions after warmup"));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Diagnostics {
        n_subjects,
        n_draws: draws.n_draws(),
        max_rhat,
        min_ess,
        n_divergent,
        warnings,
        parameters,
        chains: draws.chains.clone(),
        prior,
    }
}

pub fn fit(cfg: &RunConfig) -> Result<()> {
    prepare(cfg, "fit")?;
    let (data, covariates) = load_data(cfg)?;
    let prior = cfg.prior_spec(&data)?;
    let scfg = cfg.sampler_config(derive_seed(cfg.seed, "fit"))?;
    let draws = sample_posterior(&data, &prior, &scfg)?;
    io::write_draws(&cfg.output("draws.csv"), &draws, &covariates)?;
    let diag = diagnostics(&draws, &covariates, data.len(), prior);
    write_json(&cfg.output("diagnostics.json"), &diag)?;
    log::info!("max R-hat {}, min ESS {}", diag.max_rhat, diag.min_ess);
    Ok(())
}

pub fn estimate(cfg: &RunConfig) -> Result<()> {
    prepare(cfg, "estimate")?;
    let (data, covariates) = load_data(cfg)?;
    let table = load_draws(cfg, &covariates)?;
    let grid = cfg.time_grid(&data)?;
    let (_, imputed) = imputations(cfg, &data, &table)?;
    let (_, est) = summarize_grid(&imputed, &grid)?;
    io::write_estimands(&cfg.output("estimands.csv"), &est)?;
    io::write_states(&cfg.output("states.csv"), &est)?;
    io::write_survival(&cfg.output("survival.csv"), &est)?;
    if cfg.estimate.potential_outcomes {
        let ids: Vec<String> = data.iter().map(|s| s.id.clone()).collect();
        io::write_potential_outcomes(&cfg.output("potential_outcomes.csv"), &imputed, &ids)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct PpcOutput<'a> {
    #[serde(flatten)]
    report: &'a PpcReport,
    c_admin: Option<f64>,
    grid: Vec<f64>,
}

pub fn ppc(cfg: &RunConfig) -> Result<()> {
    prepare(cfg, "ppc")?;
    if !cfg.ppc.enabled {
        log::info!("posterior predictive checks disabled in the config");
        return Ok(());
    }
    let (data, covariates) = load_data(cfg)?;
    let table = load_draws(cfg, &covariates)?;
    let grid = cfg.time_grid(&data)?;
    let (params, imputed) = imputations(cfg, &data, &table)?;
    let report = run_ppc(&data, &params, &imputed, &grid, cfg.ppc.c_admin, derive_seed(cfg.seed, "ppc"))?;
    write_json(
        &cfg.output("ppc.json"),
        &PpcOutput {
            report: &report,
            c_admin: cfg.ppc.c_admin,
            grid: grid.times().to_vec(),
        },
    )
}

fn read_json(path: &Path) -> Result<Option<serde_json::Value>> {
    if !path.is_file() {
        return Ok(None);
    }
    let text = fs::read_to_string(path)?;
    Ok(Some(serde_json::from_str(&text)?))
}

pub fn report(cfg: &RunConfig) -> Result<()> {
    prepare(cfg, "report")?;
    let (data, covariates) = load_data(cfg)?;
    let table = load_draws(cfg, &covariates)?;
    let est_path = cfg.output("estimands.csv");
    require(&est_path, "estimate")?;
    let cells = io::read_estimands(&est_path)?;
    let surv_path = cfg.output("survival.csv");
    require(&surv_path, "estimate")?;
    let (_, survival) = io::read_table(&surv_path)?;

    let diagonal: Vec<_> = cells.iter().filter(|c| c.r == c.t).collect();
    let times: Vec<f64> = diagonal.iter().map(|c| c.t).collect::<Vec<_>>();
    let mut times_dedup = times.clone();
    times_dedup.dedup();
    let pick = |e: semicomp::estimands::Estimand, t: f64| {
        diagonal
            .iter()
            .find(|c| c.estimand == e && c.t == t)
            .and_then(|c| c.summary)
    };
    let s_fields = |s: Option<Summary>| match s {
        Some(s) => vec![Some(s.mean), Some(s.lo95), Some(s.hi95)],
        None => vec![None, None, None],
    };
    io::write_table(
        &cfg.output("diagonals.csv"),
        &["t", "q_mean", "q_lo95", "q_hi95", "m_mean", "m_lo95", "m_hi95"],
        times_dedup.iter().map(|&t| {
            let mut row = vec![Some(t)];
            row.extend(s_fields(pick(semicomp::estimands::Estimand::TvSace, t)));
            row.extend(s_fields(pick(semicomp::estimands::Estimand::RmSace, t)));
            row
        }),
    )?;

    let grid = semicomp::estimands::TimeGrid::new(survival.iter().filter_map(|r| r[0]).collect(), None)?;
    let km = [km_arm(&data, Arm::Control, &grid)?, km_arm(&data, Arm::Treated, &grid)?];
    io::write_table(
        &cfg.output("survival_curves.csv"),
        &["t", "km0", "km1", "s0", "s0_lo95", "s0_hi95", "s1", "s1_lo95", "s1_hi95"],
        survival.iter().enumerate().map(|(k, r)| {
            let mut row = vec![r[0], Some(km[0][k]), Some(km[1][k])];
            row.extend_from_slice(&r[1..]);
            row
        }),
    )?;

    let sigmas: Vec<f64> = table.params.iter().map(|p| p.sigma).collect();
    let po_path = cfg.output("potential_outcomes.csv");
    let in_sample: Vec<f64> = if po_path.is_file() {
        io::read_potential_outcomes(&po_path)?.1.into_iter().flat_map(|d| d.gamma).collect()
    } else {
        let (_, imputed) = imputations(cfg, &data, &table)?;
        imputed.into_iter().flat_map(|d| d.gamma).collect()
    };
    let FrailtyDensity { gamma, in_sample: f_in, predictive } = frailty_density(&in_sample, &sigmas, 200)?;
    io::write_table(
        &cfg.output("frailty_density.csv"),
        &["gamma", "in_sample", "predictive"],
        gamma.iter().zip(&f_in).zip(&predictive).map(|((g, a), b)| vec![Some(*g), Some(*a), Some(*b)]),
    )?;

    let ratio: Vec<Option<f64>> = sigmas
        .iter()
        .map(|&s| Some(frailty_quantile(s, 0.9).ok()? / frailty_quantile(s, 0.1).ok()?))
        .collect();
    let summary_json = |s: Option<Summary>| serde_json::to_value(s).unwrap_or(serde_json::Value::Null);
    let snapshot: Vec<_> = times_dedup
        .iter()
        .map(|&t| {
            json!({
                "t": t,
                "q": summary_json(pick(semicomp::estimands::Estimand::TvSace, t)),
                "m": summary_json(pick(semicomp::estimands::Estimand::RmSace, t)),
            })
        })
        .collect();
    let diag = read_json(&cfg.output("diagnostics.json"))?;
    let ppc = read_json(&cfg.output("ppc.json"))?;
    let out = json!({
        "n_subjects": data.len(),
        "n_treated": data.iter().filter(|s| s.z == Arm::Treated).count(),
        "n_draws": table.params.len(),
        "sigma": summary_json(summarize(sigmas.iter().map(|s| Some(*s)))),
        "frailty_q90_q10_ratio": summary_json(summarize(ratio)),
        "max_rhat": diag.as_ref().and_then(|d| d.get("max_rhat").cloned()),
        "min_ess": diag.as_ref().and_then(|d| d.get("min_ess").cloned()),
        "diagnostic_warnings": diag.as_ref().and_then(|d| d.get("warnings").cloned()),
        "pppv_ks": ppc.as_ref().and_then(|p| p.get("pppv_ks").cloned()),
        "snapshot_effects": snapshot,
        "plots": ["diagonals.csv", "survival_curves.csv", "frailty_density.csv", "states.csv"],
    });
    write_json(&cfg.output("report.json"), &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thinning_is_even_and_bounded() {
        assert_eq!(thin(10, 0), (0..10).collect::<Vec<_>>());
        assert_eq!(thin(10, 20), (0..10).collect::<Vec<_>>());
        assert_eq!(thin(10, 4), vec![0, 2, 5, 7]);
    }
}
