//! Distributional checks of `εF_{t/ε²} → N(0, tΣ)` and the long-time classification of
//! the homogenized limit.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::ValidatedModel;
use crate::sim::scaled_samples;
use crate::stats::{cf_distance, covariance, ks_normal, project, projection_directions};
use crate::torus::InvariantMeasure;

pub const MIN_SAMPLES: usize = 1000;
/// Significance level of the projected KS tests.
pub const KS_ALPHA: f64 = 0.01;
/// Smallest eigenvalue (or projected variance) treated as nondegenerate.
pub const DEGENERATE_TOL: f64 = 1e-10;
/// Sup-norm below which a drift counts as constant.
pub const DRIFT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct KsProjection {
    pub direction: Vec<f64>,
    /// `t·uᵀΣu`.
    pub variance: f64,
    pub statistic: f64,
    pub p_value: f64,
    /// Degenerate direction, not tested.
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GaussianTestReport {
    pub eps: Option<f64>,
    pub t: f64,
    pub n: usize,
    /// Row-major empirical covariance.
    pub cov: Vec<f64>,
    pub cov_se: Vec<f64>,
    /// `max |Ĉov_ij − tΣ_ij|`.
    pub cov_error: f64,
    /// Standard error of the entry attaining `cov_error`.
    pub cov_error_se: f64,
    pub cov_within_3se: bool,
    pub cf_distance: f64,
    pub cf_se: f64,
    pub ks: Vec<KsProjection>,
    pub degenerate_direction: bool,
    pub passed: bool,
}

impl GaussianTestReport {
    pub fn min_ks_p(&self) -> f64 {
        self.ks.iter().filter(|k| !k.skipped).map(|k| k.p_value).fold(1.0, f64::min)
    }

    pub fn ks_passed(&self) -> bool {
        self.ks.iter().all(|k| k.skipped || k.p_value > KS_ALPHA)
    }
}

/// Compare `samples` with `N(0, tΣ)` by covariance and characteristic function, then by
/// KS along each eigendirection.
pub fn test_gaussian(samples: &[Vec<f64>], sigma: &DMatrix<f64>, t: f64) -> Result<GaussianTestReport> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::Config(format!("need at least {MIN_SAMPLES} samples, got {}", samples.len())));
    }
    let d = sigma.nrows();
    if sigma.ncols() != d || samples.iter().any(|s| s.len() != d) {
        return Err(Error::Dimension("samples and Σ dimensions differ".into()));
    }
    if linalg::min_eigenvalue(sigma) < -DEGENERATE_TOL {
        return Err(Error::NotPsd(linalg::min_eigenvalue(sigma)));
    }
    let target = sigma * t;
    let est = covariance(samples)?;
    let mut cov_error = 0.0;
    let mut cov_error_se = 0.0;
    let mut within = true;
    for i in 0..d {
        for j in 0..d {
            let dev = (est.cov[(i, j)] - target[(i, j)]).abs();
            within &= dev <= 3.0 * est.se[(i, j)];
            if dev > cov_error {
                cov_error = dev;
                cov_error_se = est.se[(i, j)];
            }
        }
    }
    let cf = cf_distance(samples, &target);
    let mut degenerate = false;
    let ks: Vec<KsProjection> = projection_directions(d)
        .into_iter()
        .map(|u| {
            let uv = DVector::from_column_slice(&u);
            let variance = (uv.transpose() * &target * &uv)[(0, 0)];
            if variance <= DEGENERATE_TOL {
                degenerate = true;
                return KsProjection { direction: u, variance, statistic: f64::NAN, p_value: f64::NAN, skipped: true };
            }
            let r = ks_normal(&project(samples, &u), variance);
            KsProjection { direction: u, variance, statistic: r.statistic, p_value: r.p_value, skipped: false }
        })
        .collect();
    let row_major = |m: &DMatrix<f64>| m.transpose().iter().copied().collect::<Vec<f64>>();
    let mut report = GaussianTestReport {
        eps: None,
        t,
        n: samples.len(),
        cov: row_major(&est.cov),
        cov_se: row_major(&est.se),
        cov_error,
        cov_error_se,
        cov_within_3se: within,
        cf_distance: cf.distance,
        cf_se: cf.se,
        ks,
        degenerate_direction: degenerate,
        passed: false,
    };
    report.passed = within && report.ks_passed();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ConvergenceSweep {
    pub reports: Vec<GaussianTestReport>,
    /// `cf_{k+1} ≤ cf_k + 2·√(se_k² + se_{k+1}²)` along the sweep.
    pub cf_nonincreasing: bool,
    pub final_passed: bool,
    pub passed: bool,
}

/// One [`test_gaussian`] report per ε (strictly decreasing), all from `F_0 = 0` with the
/// same seed, so consecutive ε share random streams.
pub fn convergence_sweep(
    model: &ValidatedModel,
    sigma: &DMatrix<f64>,
    eps_list: &[f64],
    t: f64,
    n: usize,
    seed: u64,
    dt: f64,
) -> Result<ConvergenceSweep> {
    if eps_list.is_empty() || eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("ε list must be nonempty and strictly decreasing".into()));
    }
    let reports = eps_list
        .iter()
        .map(|&eps| {
            let samples = scaled_samples(model, eps, t, n, seed, dt)?;
            let mut r = test_gaussian(&samples, sigma, t)?;
            r.eps = Some(eps);
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    let cf_nonincreasing = reports
        .windows(2)
        .all(|w| w[1].cf_distance <= w[0].cf_distance + 2.0 * (w[0].cf_se.powi(2) + w[1].cf_se.powi(2)).sqrt());
    let final_passed = reports.last().is_some_and(|r| r.passed);
    Ok(ConvergenceSweep { passed: cf_nonincreasing && final_passed, reports, cf_nonincreasing, final_passed })
}

/// Fraction of `reps` independent repetitions at one ε whose projected KS tests all pass.
/// Repetition `k` uses seed `derive_seed(seed, k)`.
pub fn ks_pass_rate(model: &ValidatedModel, sigma: &DMatrix<f64>, eps: f64, t: f64, n: usize, seed: u64, dt: f64, reps: usize) -> Result<(f64, Vec<f64>)> {
    let mut min_p = Vec::with_capacity(reps);
    let mut passes = 0;
    for k in 0..reps {
        let samples = scaled_samples(model, eps, t, n, crate::rng::derive_seed(seed, k as u64), dt)?;
        let r = test_gaussian(&samples, sigma, t)?;
        if r.ks_passed() {
            passes += 1;
        }
        min_p.push(r.min_ks_p());
    }
    Ok((passes as f64 / reps.max(1) as f64, min_p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum Classification {
    Recurrent,
    Transient,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LongTimeVerdict {
    pub d: usize,
    pub sigma_nondegenerate: bool,
    pub classification: Classification,
    pub ergodic: bool,
}

/// The homogenized Brownian motion is recurrent iff `d ≤ 2` and never ergodic; the
/// classification is refused for degenerate Σ.
pub fn classify_longtime(d: usize, sigma: &DMatrix<f64>) -> Result<LongTimeVerdict> {
    if sigma.nrows() != d || sigma.ncols() != d || d == 0 {
        return Err(Error::Dimension(format!("Σ is {}x{} for d = {d}", sigma.nrows(), sigma.ncols())));
    }
    if (sigma - sigma.transpose()).amax() > 1e-12 {
        return Err(Error::Config("Σ must be symmetric".into()));
    }
    let min = linalg::min_eigenvalue(sigma);
    if !(min > DEGENERATE_TOL) {
        return Err(Error::Degenerate(format!("smallest eigenvalue of Σ is {min:e}; the limit is not irreducible")));
    }
    Ok(LongTimeVerdict {
        d,
        sigma_nondegenerate: true,
        classification: if d <= 2 { Classification::Recurrent } else { Classification::Transient },
        ergodic: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DriftVerdict {
    pub bbar: Vec<f64>,
    pub sup_deviation: f64,
    pub admissible: bool,
    pub verdict: String,
}

/// Compare the drift with its π-average on the grid of `pi`.
pub fn drift_admissibility(model: &ValidatedModel, pi: &InvariantMeasure) -> DriftVerdict {
    let d = model.dim();
    let mut buf = vec![0.0; d];
    let values: Vec<Vec<f64>> = (0..pi.grid.n_cells())
        .map(|c| {
            model.drift().eval_packed(&pi.grid.center(c), &mut buf);
            buf.clone()
        })
        .collect();
    let bbar: Vec<f64> = (0..d).map(|i| values.iter().zip(&pi.weights).map(|(v, w)| v[i] * w).sum()).collect();
    let sup_deviation = values
        .iter()
        .flat_map(|v| v.iter().zip(&bbar).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    let admissible = sup_deviation <= DRIFT_TOL;
    let verdict = if admissible {
        "homogenizes under diffusive scaling with centering".to_string()
    } else {
        "no diffusive homogenization with constant centering: the drift is not constant".to_string()
    };
    DriftVerdict { bbar, sup_deviation, admissible, verdict }
}
