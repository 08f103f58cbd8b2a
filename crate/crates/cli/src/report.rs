//! Plot data for the frailty figure: the density of in-sample imputed
//! frailties against the predictive frailty law implied by the posterior of
//! `sigma`.

use statrs::distribution::{Continuous, Gamma};

use semicomp::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FrailtyDensity {
    pub gamma: Vec<f64>,
    pub in_sample: Vec<f64>,
    pub predictive: Vec<f64>,
}

/// Silverman's rule-of-thumb bandwidth.
fn bandwidth(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let q = |p: f64| semicomp::estimands::quantile_sorted(&s, p);
    let iqr = (q(0.75) - q(0.25)) / 1.34;
    let spread = if iqr > 0.0 { sd.min(iqr) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Gaussian kernel density of `in_sample` reflected at zero, and the mixture
/// over `sigmas` of the mean-one gamma densities, on `k` points.
pub fn frailty_density(in_sample: &[f64], sigmas: &[f64], k: usize) -> Result<FrailtyDensity> {
    if in_sample.is_empty() || sigmas.is_empty() || k < 2 {
        return Err(Error::InvalidData("frailty density needs imputed frailties and sigma draws".into()));
    }
    let mut sorted = in_sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let top = semicomp::estimands::quantile_sorted(&sorted, 0.995) * 1.2;
    let gamma: Vec<f64> = (0..k).map(|i| top * (i as f64 + 0.5) / k as f64).collect();

    let h = bandwidth(in_sample).max(1e-3 * top);
    let norm = 1.0 / (in_sample.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let kernel = |u: f64| (-0.5 * u * u).exp();
    let in_density = gamma
        .iter()
        .map(|&g| norm * in_sample.iter().map(|&v| kernel((g - v) / h) + kernel((g + v) / h)).sum::<f64>())
        .collect();

    let laws: Vec<Gamma> = sigmas
        .iter()
        .map(|&s| Gamma::new(1.0 / s, 1.0 / s).map_err(|e| Error::InvalidData(format!("sigma {s}: {e}"))))
        .collect::<Result<_>>()?;
    let predictive = gamma
        .iter()
        .map(|&g| laws.iter().map(|l| l.pdf(g)).sum::<f64>() / laws.len() as f64)
        .collect();
    Ok(FrailtyDensity {
        gamma,
        in_sample: in_density,
        predictive,
    })
}
