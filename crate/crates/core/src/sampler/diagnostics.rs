//! Split potential scale reduction and effective sample size.

use crate::error::{Error, Result};

fn check_chains(chains: &[Vec<f64>]) -> Result<usize> {
    if chains.len() < 2 {
        return Err(Error::domain("convergence diagnostics need at least two chains"));
    }
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if n < 4 {
        return Err(Error::domain("convergence diagnostics need at least four draws per chain"));
    }
    Ok(n)
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

/// Split R-hat: every chain is halved (dropping a middle draw when the length
/// is odd) and the classic between/within variance ratio is computed over the
/// halves. Returns `+inf` when the within-chain variance is zero.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    let n_all = check_chains(chains)?;
    let half = n_all / 2;
    let mut pieces: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let c = &c[..n_all];
        pieces.push(&c[..half]);
        pieces.push(&c[n_all - half..]);
    }
    let n = half as f64;
    let w = mean(&pieces.iter().map(|p| sample_var(p)).collect::<Vec<_>>());
    if !(w > 0.0) {
        log::warn!("zero within-chain variance; R-hat is infinite");
        return Ok(f64::INFINITY);
    }
    let means: Vec<f64> = pieces.iter().map(|p| mean(p)).collect();
    let b = n * sample_var(&means);
    let var_plus = (n - 1.0) / n * w + b / n;
    Ok((var_plus / w).sqrt())
}

/// Rank-normalized split R-hat: draws are replaced by normal scores of
/// their pooled ranks before [`split_rhat`].
pub fn rank_normalized_split_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    let n = check_chains(chains)?;
    let mut pooled: Vec<(f64, usize, usize)> = Vec::with_capacity(n * chains.len());
    for (c, chain) in chains.iter().enumerate() {
        for (i, &v) in chain[..n].iter().enumerate() {
            pooled.push((v, c, i));
        }
    }
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total = pooled.len() as f64;
    let mut z = vec![vec![0.0; n]; chains.len()];
    let normal = statrs::distribution::Normal::standard();
    use statrs::distribution::ContinuousCDF;
    // average ranks over ties
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        let score = normal.inverse_cdf((rank - 0.375) / (total + 0.25));
        for item in &pooled[i..=j] {
            z[item.1][item.2] = score;
        }
        i = j + 1;
    }
    split_rhat(&z)
}

/// Effective sample size combined across chains, with the autocorrelation
/// sum truncated by Geyer's initial monotone positive sequence.
pub fn ess(chains: &[Vec<f64>]) -> Result<f64> {
    let n = check_chains(chains)?;
    let m = chains.len();
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let autocov = |c: usize, lag: usize| -> f64 {
        let x = chains[c];
        let mu = means[c];
        (0..n - lag).map(|i| (x[i] - mu) * (x[i + lag] - mu)).sum::<f64>() / n as f64
    };
    let mean_autocov = |lag: usize| -> f64 { (0..m).map(|c| autocov(c, lag)).sum::<f64>() / m as f64 };

    let acov0: Vec<f64> = (0..m).map(|c| autocov(c, 0)).collect();
    let nf = n as f64;
    let w = acov0.iter().map(|a| a * nf / (nf - 1.0)).sum::<f64>() / m as f64;
    if !(w > 0.0) {
        log::warn!("zero within-chain variance; effective sample size is undefined");
        return Err(Error::numerical("constant chains have no effective sample size"));
    }
    let var_plus = w * (nf - 1.0) / nf + if m > 1 { sample_var(&means) } else { 0.0 };
    let rho = |lag: usize| 1.0 - (w - mean_autocov(lag)) / var_plus;

    let mut rho_hat = vec![0.0; n];
    rho_hat[0] = 1.0;
    let mut rho_even = 1.0;
    let mut rho_odd = rho(1);
    rho_hat[1] = rho_odd;
    let mut t = 1;
    while t + 5 < n && (rho_even + rho_odd) > 0.0 {
        rho_even = rho(t + 1);
        rho_odd = rho(t + 2);
        if rho_even + rho_odd >= 0.0 {
            rho_hat[t + 1] = rho_even;
            rho_hat[t + 2] = rho_odd;
        }
        t += 2;
    }
    let max_t = t;
    if rho_even > 0.0 && max_t + 1 < n {
        rho_hat[max_t + 1] = rho_even;
    }
    let mut t = 1;
    while t + 2 <= max_t {
        let prev = rho_hat[t - 1] + rho_hat[t];
        if rho_hat[t + 1] + rho_hat[t + 2] > prev {
            rho_hat[t + 1] = prev / 2.0;
            rho_hat[t + 2] = prev / 2.0;
        }
        t += 2;
    }
    let total = (m * n) as f64;
    let tail = if max_t + 1 < n { rho_hat[max_t + 1] } else { 0.0 };
    let tau = (-1.0 + 2.0 * rho_hat[..max_t].iter().sum::<f64>() + tail).max(1.0 / total.log10());
    Ok(total / tau)
}
