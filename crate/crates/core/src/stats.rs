//! Sample statistics used by the estimators and distributional tests.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Mean and standard error `sd/√n` of a scalar sample.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

pub fn mean_vector(samples: &[Vec<f64>]) -> DVector<f64> {
    let d = samples.first().map_or(0, Vec::len);
    let mut m = DVector::zeros(d);
    for s in samples {
        for (mi, v) in m.iter_mut().zip(s) {
            *mi += v;
        }
    }
    m / samples.len().max(1) as f64
}

/// Unbiased sample covariance with entrywise jackknife standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub se: DMatrix<f64>,
}

/// The leave-one-out covariances have the closed form
/// `S₍ᵢ₎ = (W − n/(n−1)·zᵢzᵢᵀ)/(n−2)` with `W = Σ zᵢzᵢᵀ`, so the jackknife is `O(n d²)`.
pub fn covariance(samples: &[Vec<f64>]) -> Result<CovarianceEstimate> {
    let n = samples.len();
    if n < 3 {
        return Err(Error::Config(format!("covariance needs at least 3 samples, got {n}")));
    }
    let d = samples[0].len();
    let mean = mean_vector(samples);
    let mut w = DMatrix::<f64>::zeros(d, d);
    for s in samples {
        for a in 0..d {
            for b in a..d {
                w[(a, b)] += (s[a] - mean[a]) * (s[b] - mean[b]);
            }
        }
    }
    let nf = n as f64;
    let mut ss = DMatrix::<f64>::zeros(d, d);
    for s in samples {
        for a in 0..d {
            for b in a..d {
                let dev = (s[a] - mean[a]) * (s[b] - mean[b]) - w[(a, b)] / nf;
                ss[(a, b)] += dev * dev;
            }
        }
    }
    let k = nf / ((nf - 1.0) * (nf - 2.0));
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut se = DMatrix::<f64>::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            cov[(a, b)] = w[(a, b)] / (nf - 1.0);
            cov[(b, a)] = cov[(a, b)];
            se[(a, b)] = ((nf - 1.0) / nf * k * k * ss[(a, b)]).sqrt();
            se[(b, a)] = se[(a, b)];
        }
    }
    Ok(CovarianceEstimate { mean, cov, se })
}

/// Asymptotic Kolmogorov tail `Q(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    let a = -2.0 * lambda * lambda;
    for k in 1..=100 {
        let term = sign * (a * (k * k) as f64).exp();
        sum += term;
        if term.abs() < 1e-16 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// p-value for a KS statistic with effective size `ne`, with Stephens' correction.
fn ks_p_value(dstat: f64, ne: f64) -> f64 {
    let s = ne.sqrt();
    kolmogorov_q((s + 0.12 + 0.11 / s) * dstat)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> KsResult {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut dstat: f64 = 0.0;
    for (i, x) in v.iter().enumerate() {
        let f = cdf(*x);
        dstat = dstat.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    KsResult { statistic: dstat, p_value: ks_p_value(dstat, n) }
}

/// KS test of `xs` against `N(0, var)`.
pub fn ks_normal(xs: &[f64], var: f64) -> KsResult {
    let normal = Normal::new(0.0, var.sqrt()).expect("variance checked positive by caller");
    ks_one_sample(xs, |x| normal.cdf(x))
}

/// Two-sample Kolmogorov–Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut dstat: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        dstat = dstat.max((i as f64 / na - j as f64 / nb).abs());
    }
    KsResult { statistic: dstat, p_value: ks_p_value(dstat, na * nb / (na + nb)) }
}

/// Unit projection directions: the axes, then `(e_i ± e_j)/√2` for `i < j`.
pub fn projection_directions(d: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..d {
        let mut u = vec![0.0; d];
        u[i] = 1.0;
        out.push(u);
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..d {
        for j in i + 1..d {
            for sign in [1.0, -1.0] {
                let mut u = vec![0.0; d];
                u[i] = s;
                u[j] = sign * s;
                out.push(u);
            }
        }
    }
    out
}

pub fn project(samples: &[Vec<f64>], u: &[f64]) -> Vec<f64> {
    samples.iter().map(|s| s.iter().zip(u).map(|(a, b)| a * b).sum()).collect()
}

/// The fixed 17-point frequency grid `{−2, −1.75, …, 2}`.
pub fn xi_grid() -> Vec<f64> {
    (0..17).map(|k| -2.0 + 0.25 * k as f64).collect()
}

/// Largest deviation of the empirical characteristic function from a centered Gaussian
/// one, with the standard error of `φ̂` at the maximizing frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct CfDistance {
    pub distance: f64,
    pub se: f64,
    pub xi: Vec<f64>,
}

/// Sup over `ξ = s·u` (`s` on [`xi_grid`], `u` over [`projection_directions`]) of
/// `|φ̂(ξ) − exp(−ξᵀ V ξ / 2)|`.
pub fn cf_distance(samples: &[Vec<f64>], v: &DMatrix<f64>) -> CfDistance {
    let d = v.nrows();
    let n = samples.len() as f64;
    let mut best = CfDistance { distance: 0.0, se: 0.0, xi: vec![0.0; d] };
    for u in projection_directions(d) {
        let proj = project(samples, &u);
        let uv = DVector::from_column_slice(&u);
        let q = (uv.transpose() * v * &uv)[(0, 0)];
        for s in xi_grid() {
            let (mut re, mut im, mut re2, mut im2) = (0.0, 0.0, 0.0, 0.0);
            for p in &proj {
                let (si, co) = (s * p).sin_cos();
                re += co;
                im += si;
                re2 += co * co;
                im2 += si * si;
            }
            let (re, im) = (re / n, im / n);
            let target = (-0.5 * s * s * q).exp();
            let dist = ((re - target).powi(2) + im * im).sqrt();
            if dist > best.distance {
                let var = (re2 / n - re * re) + (im2 / n - im * im);
                best = CfDistance { distance: dist, se: (var.max(0.0) / n).sqrt(), xi: u.iter().map(|c| c * s).collect() };
            }
        }
    }
    best
}

/// Ordinary least-squares line with coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn linear_fit(points: &[(f64, f64)]) -> LinearFit {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    LinearFit { slope, intercept: my - slope * mx, r2 }
}
