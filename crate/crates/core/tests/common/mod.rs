#![allow(dead_code)]

use rand::Rng;
use rand_distr::StandardNormal;
use semicomp::model::{Arm, ModelParams, SubjectRecord, Transition};

pub const CASES: [(bool, bool); 4] = [(false, false), (true, false), (false, true), (true, true)];

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

pub fn random_params<R: Rng>(rng: &mut R, p: usize) -> ModelParams {
    let mut params = ModelParams::with_shapes([[1.0; 3]; 2], [[1.0; 3]; 2], 1.0, p);
    for z in 0..2 {
        for j in 0..3 {
            params.alpha[z][j] = rng.random_range(0.6..1.8);
            params.kappa[z][j] = log_uniform(rng, 0.1, 2.0);
            for b in params.beta[z][j].iter_mut() {
                *b = 0.5 * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    params.sigma = log_uniform(rng, 0.05, 3.0);
    params
}

pub fn random_subject<R: Rng>(rng: &mut R, id: usize, case: (bool, bool), p: usize) -> SubjectRecord {
    let (delta_r, delta_t) = case;
    let y_r = rng.random_range(0.05..2.5);
    let y_t = if delta_r { y_r + rng.random_range(0.01..2.0) } else { y_r };
    SubjectRecord {
        id: id.to_string(),
        z: if rng.random::<bool>() { Arm::Treated } else { Arm::Control },
        y_r,
        delta_r,
        y_t,
        delta_t,
        x: (0..p).map(|_| rng.sample(StandardNormal)).collect(),
    }
}

pub fn random_dataset<R: Rng>(rng: &mut R, n: usize, p: usize) -> Vec<SubjectRecord> {
    (0..n).map(|i| random_subject(rng, i, CASES[i % 4], p)).collect()
}

/// Weibull cumulative hazard at unit frailty, written out directly.
pub fn weibull_cum_hazard(params: &ModelParams, z: usize, j: usize, u: f64, x: &[f64]) -> f64 {
    let eta: f64 = params.beta[z][j].iter().zip(x).map(|(b, v)| b * v).sum();
    params.kappa[z][j] * u.powf(params.alpha[z][j]) * eta.exp()
}

pub fn weibull_hazard(params: &ModelParams, z: usize, j: usize, u: f64, x: &[f64]) -> f64 {
    let eta: f64 = params.beta[z][j].iter().zip(x).map(|(b, v)| b * v).sum();
    params.kappa[z][j] * params.alpha[z][j] * u.powf(params.alpha[z][j] - 1.0) * eta.exp()
}

/// `(event count, log hazard sum, cumulative hazard sum)` at unit frailty.
pub fn subject_terms(s: &SubjectRecord, params: &ModelParams) -> (usize, f64, f64) {
    let z = s.z.index();
    let mut d = 0;
    let mut lh = 0.0;
    let mut cum = weibull_cum_hazard(params, z, 0, s.y_r, &s.x) + weibull_cum_hazard(params, z, 1, s.y_r, &s.x);
    if s.delta_r {
        d += 1;
        lh += weibull_hazard(params, z, 0, s.y_r, &s.x).ln();
        cum += weibull_cum_hazard(params, z, 2, s.y_t - s.y_r, &s.x);
        if s.delta_t {
            d += 1;
            lh += weibull_hazard(params, z, 2, s.y_t - s.y_r, &s.x).ln();
        }
    } else if s.delta_t {
        d += 1;
        lh += weibull_hazard(params, z, 1, s.y_r, &s.x).ln();
    }
    (d, lh, cum)
}

pub fn transition(j: usize) -> Transition {
    [Transition::Nonterminal, Transition::Terminal, Transition::PostNonterminal][j]
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for i in 0..7 {
        let v = f(c - h * XGK[i]) + f(c + h * XGK[i]);
        k += WGK[i] * v;
        if i % 2 == 1 {
            g += WG[i / 2] * v;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss-Kronrod 7-15 quadrature on `[a, b]`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64) -> f64 {
    fn rec(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (v, err) = gk15(f, a, b);
        if err <= tol || err <= 1e-14 * v.abs() || depth == 0 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth - 1) + rec(f, m, b, 0.5 * tol, depth - 1)
    }
    rec(&f, a, b, abs_tol, 40)
}

/// `log ∫ exp(h(s)) ds` for a unimodal log-integrand on the real line.
pub fn log_integral_unimodal(h: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let steps = 20_000;
    let dx = (hi - lo) / steps as f64;
    let (mut s_max, mut m) = (lo, f64::NEG_INFINITY);
    for i in 0..=steps {
        let s = lo + i as f64 * dx;
        let v = h(s);
        if v > m {
            m = v;
            s_max = s;
        }
    }
    let mut a = s_max;
    while h(a) > m - 80.0 && a > lo {
        a -= 0.25;
    }
    let mut b = s_max;
    while h(b) > m - 80.0 && b < hi {
        b += 0.25;
    }
    let mid = [a, s_max - dx, s_max + dx, b];
    let g = |s: f64| (h(s) - m).exp();
    let total: f64 = mid.windows(2).map(|w| integrate(g, w[0], w[1], 1e-13)).sum();
    m + total.ln()
}

/// Log density of `Gamma(shape 1/sigma, rate 1/sigma)`.
pub fn log_gamma_prior(gamma: f64, sigma: f64) -> f64 {
    let a = 1.0 / sigma;
    a * a.ln() - statrs::function::gamma::ln_gamma(a) + (a - 1.0) * gamma.ln() - a * gamma
}

/// Asymptotic Kolmogorov tail probability `P(sqrt(n) D > d sqrt(n))`.
pub fn kolmogorov_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let x = (sn + 0.12 + 0.11 / sn) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = 2.0 * (-2.0 * kf * kf * x * x).exp();
        p += if k % 2 == 1 { term } else { -term };
        if term < 1e-300 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov statistic of `sample` against `cdf`.
pub fn ks_distance(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Type-7 empirical quantile.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Log marginal likelihood of one subject by quadrature of the conditional
/// likelihood against the gamma frailty density, on the log-frailty scale.
pub fn quadrature_log_marginal(s: &SubjectRecord, params: &ModelParams) -> f64 {
    let sigma = params.sigma;
    let h = |v: f64| {
        let g = v.exp();
        semicomp::likelihood::conditional_loglik(s, g, params).unwrap() + log_gamma_prior(g, sigma) + v
    };
    log_integral_unimodal(h, -400.0, 12.0)
}

/// Largest relative discrepancy between the closed-form marginal and its
/// quadrature over `n` random instances cycling through the four cases.
pub fn marginal_quadrature_worst(n: usize, seed: u64) -> f64 {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let p = i % 3;
            let params = random_params(&mut rng, p);
            let s = random_subject(&mut rng, i, CASES[i % 4], p);
            let closed = semicomp::likelihood::marginal_loglik(&s, &params).unwrap();
            let quad = quadrature_log_marginal(&s, &params);
            (closed - quad).abs() / quad.abs()
        })
        .fold(0.0, f64::max)
}

/// Largest scaled discrepancy `|g - fd| / max(1, |fd|)` between the analytic
/// gradient and central differences with step `h` over `n` random instances.
pub fn gradient_fd_worst(n: usize, h: f64, seed: u64) -> f64 {
    use rand::SeedableRng;
    use semicomp::likelihood::{grad_total_marginal_loglik, total_marginal_loglik};
    use semicomp::model::ParamLayout;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let p = i % 3;
        let params = random_params(&mut rng, p);
        let data = random_dataset(&mut rng, 24, p);
        let layout = ParamLayout::new(p);
        let u = params.unconstrain();
        let g = grad_total_marginal_loglik(&data, &u).unwrap();
        let f = |v: &[f64]| total_marginal_loglik(&data, &layout.constrain(v)).unwrap();
        for k in 0..layout.dim() {
            let mut up = u.0.clone();
            let mut dn = u.0.clone();
            up[k] += h;
            dn[k] -= h;
            let fd = (f(&up) - f(&dn)) / (2.0 * h);
            worst = worst.max((g[k] - fd).abs() / fd.abs().max(1.0));
        }
    }
    worst
}

/// Lanczos approximation (g = 7, nine terms) of `ln Γ(x)` for `x > 0`.
pub fn lanczos_ln_gamma(x: f64) -> f64 {
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - lanczos_ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized lower incomplete gamma `P(a, x)` by its power series.
pub fn lower_gamma_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    for n in 1..10_000 {
        term *= x / (a + n as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum * (a * x.ln() - x - lanczos_ln_gamma(a)).exp()
}

/// Regularized upper incomplete gamma `Q(a, x)` by Lentz's continued fraction.
pub fn upper_gamma_cf(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (a * x.ln() - x - lanczos_ln_gamma(a)).exp() * h
}

/// `P(a, x)`, series below `a + 1` and continued fraction above.
pub fn regularized_lower_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x < a + 1.0 {
        lower_gamma_series(a, x)
    } else {
        1.0 - upper_gamma_cf(a, x)
    }
}

/// Quantile of `Gamma(shape, scale)` by bisection on [`regularized_lower_gamma`].
pub fn gamma_quantile_bisect(shape: f64, scale: f64, p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while regularized_lower_gamma(shape, hi) < p {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if regularized_lower_gamma(shape, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    scale * 0.5 * (lo + hi)
}

/// Kaplan-Meier fixtures `(times, events, eval_times, hand values)`.
pub fn km_fixtures() -> Vec<(Vec<f64>, Vec<bool>, Vec<f64>, Vec<f64>)> {
    vec![
        (
            vec![1.0, 2.0, 3.0],
            vec![true, false, true],
            vec![0.5, 1.0, 1.5, 3.0, 3.5],
            vec![1.0, 1.0, 2.0 / 3.0, 2.0 / 3.0, 0.0],
        ),
        // ties among deaths and with censoring: 4/6, then 4/6 * 2/3, then * 1/2
        (
            vec![2.0, 2.0, 2.0, 4.0, 5.0, 5.0],
            vec![true, true, false, true, false, true],
            vec![1.0, 2.5, 4.5, 6.0],
            vec![1.0, 2.0 / 3.0, 4.0 / 9.0, 2.0 / 9.0],
        ),
        // a death and a censoring at 1.0: 6/7, 6/7 * 5/6, then * 1/3 for two deaths of three at risk
        (
            vec![4.0, 1.0, 3.0, 0.5, 2.0, 1.0, 3.0],
            vec![false, true, true, true, false, false, true],
            vec![0.5, 0.75, 1.5, 3.0, 3.5, 10.0],
            vec![1.0, 6.0 / 7.0, 5.0 / 7.0, 5.0 / 7.0, 5.0 / 21.0, 5.0 / 21.0],
        ),
    ]
}

/// Worst Kolmogorov p-value over five frailty full-conditional settings, each with `n` draws.
pub fn frailty_gof_min_pvalue(n: usize, seed: u64) -> f64 {
    use rand::SeedableRng;
    use statrs::distribution::ContinuousCDF;
    let settings: [(bool, bool, f64); 5] = [
        (false, false, 0.3),
        (true, false, 1.2),
        (false, true, 2.5),
        (true, true, 0.5),
        (true, true, 4.0),
    ];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 1.0;
    for (k, &(dr, dt, sigma)) in settings.iter().enumerate() {
        let mut params = random_params(&mut rng, 1);
        params.sigma = sigma;
        let s = random_subject(&mut rng, k, (dr, dt), 1);
        let (d, _, cum) = subject_terms(&s, &params);
        let law = statrs::distribution::Gamma::new(1.0 / sigma + d as f64, 1.0 / sigma + cum).unwrap();
        let mut draws: Vec<f64> = (0..n).map(|_| semicomp::imputation::sample_frailty(&s, &params, &mut rng).unwrap()).collect();
        let dist = ks_distance(&mut draws, |v| law.cdf(v));
        worst = worst.min(kolmogorov_pvalue(dist, n));
    }
    worst
}

/// `(max |ECDF - F|, worst relative quantile error at lower = 0)` for one Weibull.
pub fn truncated_weibull_errors(shape: f64, scale: f64, lower: f64, n: usize, seed: u64) -> (f64, f64) {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut draws: Vec<f64> = (0..n).map(|_| semicomp::imputation::sample_truncated_weibull(shape, scale, lower, &mut rng).unwrap()).collect();
    assert!(draws.iter().all(|&v| v > lower));
    let h0 = (lower / scale).powf(shape);
    let cdf_dev = ks_distance(&mut draws, |u| 1.0 - (-((u / scale).powf(shape) - h0)).exp());

    let mut plain: Vec<f64> = (0..n).map(|_| semicomp::imputation::sample_truncated_weibull(shape, scale, 0.0, &mut rng).unwrap()).collect();
    plain.sort_by(f64::total_cmp);
    let q_err = [0.1, 0.25, 0.5, 0.75, 0.9]
        .iter()
        .map(|&p| {
            let exact = scale * (-(1.0f64 - p).ln()).powf(1.0 / shape);
            (quantile(&plain, p) - exact).abs() / exact
        })
        .fold(0.0, f64::max);
    (cdf_dev, q_err)
}
