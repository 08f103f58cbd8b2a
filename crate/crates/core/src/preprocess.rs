//! Propensity scores, greedy 1:1 matching and covariate standardization.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Arm, SubjectRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    /// Intercept first, then one coefficient per covariate.
    pub coefs: Vec<f64>,
    pub iterations: usize,
}

impl LogisticFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let eta = self.coefs[0] + self.coefs[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
        1.0 / (1.0 + (-eta).exp())
    }
}

const MAX_IRLS_ITER: usize = 50;
const IRLS_TOL: f64 = 1e-10;

fn design(x: &[Vec<f64>]) -> DMatrix<f64> {
    let p = x.first().map_or(0, Vec::len);
    DMatrix::from_fn(x.len(), p + 1, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] })
}

fn separation(beta: &DVector<f64>, names: &[String]) -> Error {
    let norm = beta.norm();
    let direction: Vec<f64> = beta.iter().map(|b| b / norm).collect();
    let k = direction
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map_or(0, |(k, _)| k);
    let dominant = if k == 0 {
        "intercept".to_string()
    } else {
        names.get(k - 1).cloned().unwrap_or_else(|| format!("x{k}"))
    };
    Error::Separation { direction, dominant }
}

/// Maximum-likelihood logistic regression by iteratively reweighted least squares.
pub fn fit_logistic(x: &[Vec<f64>], z: &[bool], names: &[String]) -> Result<LogisticFit> {
    if x.is_empty() || x.len() != z.len() {
        return Err(Error::data("propensity model needs one treatment flag per covariate row"));
    }
    let p = x[0].len();
    if x.iter().any(|r| r.len() != p) {
        return Err(Error::data("covariate rows differ in length"));
    }
    let xm = design(x);
    let y = DVector::from_iterator(z.len(), z.iter().map(|&v| v as u8 as f64));
    let mut beta = DVector::zeros(p + 1);
    let mut norms: Vec<f64> = vec![0.0];
    for it in 1..=MAX_IRLS_ITER {
        let eta = &xm * &beta;
        let mu = eta.map(|e| 1.0 / (1.0 + (-e).exp()));
        let w = mu.map(|m| m * (1.0 - m));
        let grad = xm.transpose() * (&y - &mu);
        let mut xw = xm.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= w[i];
        }
        let hess = xm.transpose() * xw;
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => match hess.lu().solve(&grad) {
                Some(s) => s,
                None => {
                    // weights can only collapse on a full-rank design when fitted
                    // probabilities are driven to 0 or 1
                    if growing(&norms) || (xm.transpose() * &xm).cholesky().is_some() {
                        return Err(separation(&beta, names));
                    }
                    return Err(Error::data("propensity design is not of full column rank"));
                }
            },
        };
        beta += &step;
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::numerical("propensity fit diverged"));
        }
        norms.push(beta.norm());
        if step.amax() < IRLS_TOL {
            return Ok(LogisticFit {
                coefs: beta.iter().copied().collect(),
                iterations: it,
            });
        }
    }
    if growing(&norms) {
        return Err(separation(&beta, names));
    }
    Err(Error::numerical(format!(
        "propensity fit did not converge in {MAX_IRLS_ITER} iterations"
    )))
}

/// Coefficient norm increased over each of the last several iterations.
fn growing(norms: &[f64]) -> bool {
    let k = norms.len().min(8);
    k >= 5 && norms[norms.len() - k..].windows(2).all(|w| w[1] > w[0]) && *norms.last().unwrap() > 5.0
}

/// Score vector of the logistic log-likelihood at `coefs`.
pub fn logistic_gradient(x: &[Vec<f64>], z: &[bool], coefs: &[f64]) -> Vec<f64> {
    let fit = LogisticFit {
        coefs: coefs.to_vec(),
        iterations: 0,
    };
    let mut g = vec![0.0; coefs.len()];
    for (row, &zi) in x.iter().zip(z) {
        let r = zi as u8 as f64 - fit.predict(row);
        g[0] += r;
        for (gk, v) in g[1..].iter_mut().zip(row) {
            *gk += r * v;
        }
    }
    g
}

/// Greedy nearest-neighbor matching without replacement. Treated units are
/// processed by descending propensity, ties by lower index; the nearest
/// unused control is taken, ties by lower index. Treated units whose nearest
/// control lies beyond `caliper` stay unmatched.
pub fn match_nn(ps_treated: &[f64], ps_control: &[f64], caliper: Option<f64>) -> Result<Vec<(usize, usize)>> {
    if ps_control.len() < ps_treated.len() {
        return Err(Error::data(format!(
            "{} controls cannot be matched 1:1 to {} treated units",
            ps_control.len(),
            ps_treated.len()
        )));
    }
    let mut order: Vec<usize> = (0..ps_treated.len()).collect();
    order.sort_by(|&a, &b| ps_treated[b].total_cmp(&ps_treated[a]).then(a.cmp(&b)));
    let mut used = vec![false; ps_control.len()];
    let mut pairs = Vec::with_capacity(ps_treated.len());
    for t in order {
        let mut best: Option<(usize, f64)> = None;
        for (c, &pc) in ps_control.iter().enumerate() {
            if used[c] {
                continue;
            }
            let d = (ps_treated[t] - pc).abs();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((c, d));
            }
        }
        if let Some((c, d)) = best {
            if caliper.is_none_or(|cal| d <= cal) {
                used[c] = true;
                pairs.push((t, c));
            }
        }
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardized {
    pub x: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
    /// 1 for columns that were only centred.
    pub scales: Vec<f64>,
}

impl Standardized {
    pub fn invert(&self) -> Vec<Vec<f64>> {
        self.x
            .iter()
            .map(|row| {
                row.iter()
                    .zip(self.offsets.iter().zip(&self.scales))
                    .map(|(v, (o, s))| v * s + o)
                    .collect()
            })
            .collect()
    }
}

/// Centres every column and divides `scale_columns` by their sample sd.
pub fn standardize(x: &[Vec<f64>], scale_columns: &[usize]) -> Result<Standardized> {
    if x.is_empty() {
        return Err(Error::data("no rows to standardize"));
    }
    let p = x[0].len();
    if let Some(&c) = scale_columns.iter().find(|&&c| c >= p) {
        return Err(Error::config(format!("column index {c} out of range for {p} covariates")));
    }
    let n = x.len() as f64;
    let offsets: Vec<f64> = (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let mut scales = vec![1.0; p];
    for &j in scale_columns {
        let var = x.iter().map(|r| (r[j] - offsets[j]).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        if !(sd > 0.0 && sd.is_finite()) {
            return Err(Error::data(format!("column {j} has zero variance and cannot be scaled")));
        }
        scales[j] = sd;
    }
    let xs = x
        .iter()
        .map(|r| (0..p).map(|j| (r[j] - offsets[j]) / scales[j]).collect())
        .collect();
    Ok(Standardized {
        x: xs,
        offsets,
        scales,
    })
}

/// Standardized mean difference of each covariate between arms.
pub fn standardized_mean_differences(records: &[SubjectRecord]) -> Vec<f64> {
    let p = records.first().map_or(0, |r| r.x.len());
    (0..p)
        .map(|j| {
            let col = |z: Arm| records.iter().filter(|r| r.z == z).map(|r| r.x[j]).collect::<Vec<_>>();
            let (a, b) = (col(Arm::Treated), col(Arm::Control));
            let m = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let var = |v: &[f64]| {
                let mu = m(v);
                v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
            };
            let pooled = ((var(&a) + var(&b)) / 2.0).sqrt();
            if pooled > 0.0 {
                (m(&a) - m(&b)) / pooled
            } else {
                0.0
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub coefficient_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub irls_iterations: usize,
    /// `(treated id, control id)` in matching order.
    pub pairs: Vec<(String, String)>,
    pub covariates: Vec<String>,
    pub offsets: Vec<f64>,
    pub scales: Vec<f64>,
    pub n_treated: usize,
    pub n_matched_controls: usize,
    pub smd_before: Vec<f64>,
    pub smd_after: Vec<f64>,
    pub matching_order: String,
    pub caliper: Option<f64>,
}

/// Propensity fit on all records, 1:1 matching, then standardization of the
/// matched sample.
pub fn preprocess(
    records: &[SubjectRecord],
    covariates: &[String],
    scale_columns: &[usize],
    caliper: Option<f64>,
) -> Result<(Vec<SubjectRecord>, PreprocessReport)> {
    crate::model::validate_dataset(records)?;
    let x: Vec<Vec<f64>> = records.iter().map(|r| r.x.clone()).collect();
    let z: Vec<bool> = records.iter().map(|r| r.z == Arm::Treated).collect();
    let fit = fit_logistic(&x, &z, covariates)?;
    let ps: Vec<f64> = x.iter().map(|r| fit.predict(r)).collect();
    let treated: Vec<usize> = (0..records.len()).filter(|&i| z[i]).collect();
    let control: Vec<usize> = (0..records.len()).filter(|&i| !z[i]).collect();
    let pt: Vec<f64> = treated.iter().map(|&i| ps[i]).collect();
    let pc: Vec<f64> = control.iter().map(|&i| ps[i]).collect();
    let pairs = match_nn(&pt, &pc, caliper)?;

    let mut keep: Vec<usize> = pairs.iter().flat_map(|&(t, c)| [treated[t], control[c]]).collect();
    keep.sort_unstable();
    let mut matched: Vec<SubjectRecord> = keep.iter().map(|&i| records[i].clone()).collect();
    let st = standardize(&matched.iter().map(|r| r.x.clone()).collect::<Vec<_>>(), scale_columns)?;
    for (r, xs) in matched.iter_mut().zip(&st.x) {
        r.x = xs.clone();
    }

    let mut names = vec!["intercept".to_string()];
    names.extend(covariates.iter().cloned());
    let report = PreprocessReport {
        coefficient_names: names,
        coefficients: fit.coefs.clone(),
        irls_iterations: fit.iterations,
        pairs: pairs
            .iter()
            .map(|&(t, c)| (records[treated[t]].id.clone(), records[control[c]].id.clone()))
            .collect(),
        covariates: covariates.to_vec(),
        offsets: st.offsets,
        scales: st.scales,
        n_treated: treated.len(),
        n_matched_controls: pairs.len(),
        smd_before: standardized_mean_differences(records),
        smd_after: standardized_mean_differences(&matched),
        matching_order: "greedy nearest neighbor; treated by descending propensity, ties by lower index; nearest control ties by lower index".into(),
        caliper,
    };
    Ok((matched, report))
}
