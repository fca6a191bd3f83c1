//! Monte Carlo estimates of the semimartingale characteristics of `εF_{t/ε²}` relative to
//! a truncation function `h`:
//!
//! * `B(h)ᵉ_t = ε⁻² ∫₀ᵗ ∫ (h(εy) − εy·1_{|y|≤1}) ν(F_{s/ε²}, dy) ds`,
//! * `C̃(h)ᵉ_t = ∫₀ᵗ c(F_{s/ε²}) ds + ε⁻² ∫₀ᵗ ∫ h(εy) h(εy)ᵀ ν(F_{s/ε²}, dy) ds`,
//! * `∫₀ᵗ ∫ g(y) Nᵉ(ds, dy) = ε⁻² ∫₀ᵗ ∫ g(εy) ν(F_{s/ε²}, dy) ds`.
//!
//! With `u = s/ε²` every term is `∫₀^{t/ε²} Σ_k λ_k(F_u) m_k du` for a per-family constant
//! `m_k` computed in closed form, so the only Monte Carlo error is the path average.
//! Time integrals use the trapezoidal rule on the Euler grid, jump times included.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{packed_index, Shape};
use crate::model::{norm, SizeDistribution, SizeKind, ValidatedModel};
use crate::rng::{farm, path_rng};
use crate::sim::{run_to_horizon, StepSink, Stepper, MAX_DT};

/// `h(y) = y·ρ(|y|/δ)` with `ρ = 1` on `[0,1]`, `2 − r` on `(1,2)`, `0` beyond.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationFn {
    pub delta: f64,
}

impl Default for TruncationFn {
    fn default() -> Self {
        Self { delta: 1.0 }
    }
}

impl TruncationFn {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Config(format!("truncation radius must be positive, got {delta}")));
        }
        Ok(Self { delta })
    }

    pub fn rho(r: f64) -> f64 {
        if r <= 1.0 {
            1.0
        } else if r < 2.0 {
            2.0 - r
        } else {
            0.0
        }
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        let s = Self::rho(norm(y) / self.delta);
        y.iter().map(|v| v * s).collect()
    }
}

/// Test function `g(y) = min(1, max(0, |y| − δ_g))`, vanishing on `B(0, δ_g)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BigJumpTest {
    pub delta: f64,
}

impl Default for BigJumpTest {
    fn default() -> Self {
        Self { delta: 0.5 }
    }
}

impl BigJumpTest {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Config(format!("test function must vanish near the origin, got δ_g = {delta}")));
        }
        Ok(Self { delta })
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        (norm(y) - self.delta).clamp(0.0, 1.0)
    }
}

/// `∫_a^b p(r)·r^k dr` for a polynomial `p` given by ascending coefficients.
fn poly_integral(p: &[f64], k: usize, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    p.iter()
        .enumerate()
        .map(|(j, c)| {
            let e = (j + k + 1) as i32;
            c * (b.powi(e) - a.powi(e)) / e as f64
        })
        .sum()
}

/// Per-family constants `E[h(εY) − εY·1_{|Y|≤1}]`, `E[h(εY) h(εY)ᵀ]` and `E[g(εY)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyMoments {
    pub b: Vec<f64>,
    pub hh: DMatrix<f64>,
    pub g: f64,
}

pub fn family_moments(sizes: &SizeDistribution, d: usize, eps: f64, h: &TruncationFn, g: &BigJumpTest) -> FamilyMoments {
    match &sizes.kind {
        SizeKind::Atoms(atoms) => {
            let mut b = vec![0.0; d];
            let mut hh = DMatrix::zeros(d, d);
            let mut gm = 0.0;
            for a in atoms {
                let z: Vec<f64> = a.y.iter().map(|v| eps * v).collect();
                let hz = h.apply(&z);
                let small = norm(&a.y) <= 1.0;
                for i in 0..d {
                    b[i] += a.weight * (hz[i] - if small { z[i] } else { 0.0 });
                    for j in 0..d {
                        hh[(i, j)] += a.weight * hz[i] * hz[j];
                    }
                }
                gm += a.weight * g.eval(&z);
            }
            if sizes.is_symmetric() {
                b.iter_mut().for_each(|v| *v = 0.0);
            }
            FamilyMoments { b, hh, g: gm }
        }
        SizeKind::UniformBall { radius } => {
            // |Y| has density d·r^{d−1}/R^d on [0, R]; both integrands are piecewise
            // polynomial in r.
            let rr = *radius;
            let norm_c = d as f64 / rr.powi(d as i32);
            let k = d - 1;
            let dl = h.delta / eps;
            let e2 = eps * eps;
            let inner = poly_integral(&[0.0, 0.0, e2], k, 0.0, dl.min(rr));
            // ε²r²(2 − εr/δ)²
            let q = eps / h.delta;
            let outer = poly_integral(&[0.0, 0.0, 4.0 * e2, -4.0 * e2 * q, e2 * q * q], k, dl.min(rr), (2.0 * dl).min(rr));
            let h2 = norm_c * (inner + outer);
            let (lo, hi) = (g.delta / eps, (g.delta + 1.0) / eps);
            let ramp = poly_integral(&[-g.delta, eps], k, lo.min(rr), hi.min(rr));
            let flat = poly_integral(&[1.0], k, hi.min(rr), rr);
            FamilyMoments { b: vec![0.0; d], hh: DMatrix::identity(d, d) * (h2 / d as f64), g: norm_c * (ramp + flat) }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicsConfig {
    pub eps: f64,
    pub t: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Unscaled Euler step.
    pub dt: f64,
    pub truncation: TruncationFn,
    pub test: BigJumpTest,
}

impl CharacteristicsConfig {
    pub fn new(eps: f64, t: f64, n_paths: usize, seed: u64, dt: f64) -> Self {
        Self { eps, t, n_paths, seed, dt, truncation: TruncationFn::default(), test: BigJumpTest::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) || !(self.t >= 0.0 && self.t.is_finite()) {
            return Err(Error::Config(format!("need ε > 0 and t ≥ 0, got ε = {}, t = {}", self.eps, self.t)));
        }
        if !(self.dt > 0.0 && self.dt <= MAX_DT) || self.n_paths < 2 {
            return Err(Error::Config(format!("need 0 < dt ≤ {MAX_DT} and at least 2 paths")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CharacteristicsEstimate {
    pub eps: f64,
    pub t: f64,
    pub n_paths: usize,
    pub bh: Vec<f64>,
    pub bh_se: Vec<f64>,
    /// Row-major `d×d`.
    pub ctilde: Vec<f64>,
    pub ctilde_se: Vec<f64>,
    pub g_n: f64,
    pub g_n_se: f64,
}

impl CharacteristicsEstimate {
    /// Largest `|B_i|` with its standard error.
    pub fn bh_deviation(&self) -> (f64, f64) {
        argmax_abs(&self.bh, &self.bh_se, |_| 0.0)
    }

    /// Largest `|C̃_ij − tΣ_ij|` with its standard error.
    pub fn ctilde_deviation(&self, sigma: &DMatrix<f64>) -> (f64, f64) {
        let d = sigma.nrows();
        argmax_abs(&self.ctilde, &self.ctilde_se, |k| self.t * sigma[(k / d, k % d)])
    }
}

fn argmax_abs(v: &[f64], se: &[f64], target: impl Fn(usize) -> f64) -> (f64, f64) {
    v.iter().enumerate().fold((0.0, 0.0), |best, (k, x)| {
        let dev = (x - target(k)).abs();
        if dev > best.0 {
            (dev, se[k])
        } else {
            best
        }
    })
}

/// Trapezoidal accumulator of `∫ λ_k(F_u) du` and `∫ c(F_u) du` along one path.
struct Integrals<'a> {
    model: &'a ValidatedModel,
    /// Fields that vary in space; constant ones are integrated exactly afterwards.
    vary_lambda: Vec<bool>,
    vary_c: bool,
    prev_lambda: Vec<f64>,
    prev_c: Vec<f64>,
    lambda: Vec<f64>,
    c: Vec<f64>,
    buf: Vec<f64>,
}

impl<'a> Integrals<'a> {
    fn new(model: &'a ValidatedModel, x0: &[f64]) -> Self {
        let p = Shape::Matrix(model.dim()).packed_len();
        let mut s = Self {
            model,
            vary_lambda: model.jumps().iter().map(|f| !f.intensity.is_constant()).collect(),
            vary_c: !model.diffusion().is_constant(),
            prev_lambda: vec![0.0; model.jumps().len()],
            prev_c: vec![0.0; p],
            lambda: vec![0.0; model.jumps().len()],
            c: vec![0.0; p],
            buf: vec![0.0; p],
        };
        s.reset(x0);
        s
    }

    fn reset(&mut self, x: &[f64]) {
        for (k, f) in self.model.jumps().iter().enumerate() {
            if self.vary_lambda[k] {
                self.prev_lambda[k] = f.intensity.eval_scalar_unchecked(x);
            }
        }
        if self.vary_c {
            self.model.diffusion().eval_packed(x, &mut self.prev_c);
        }
    }
}

impl StepSink for Integrals<'_> {
    fn segment(&mut self, h: f64, x: &[f64]) -> bool {
        for (k, f) in self.model.jumps().iter().enumerate() {
            if self.vary_lambda[k] {
                let cur = f.intensity.eval_scalar_unchecked(x);
                self.lambda[k] += 0.5 * h * (self.prev_lambda[k] + cur);
                self.prev_lambda[k] = cur;
            }
        }
        if self.vary_c {
            self.model.diffusion().eval_packed(x, &mut self.buf);
            for ((acc, p), cur) in self.c.iter_mut().zip(self.prev_c.iter_mut()).zip(&self.buf) {
                *acc += 0.5 * h * (*p + cur);
                *p = *cur;
            }
        }
        false
    }

    fn jump(&mut self, _y: &[f64], x: &[f64]) -> bool {
        self.reset(x);
        false
    }
}

/// Estimate all three characteristics from one set of paths started at `F_0 = 0`.
pub fn estimate_characteristics(model: &ValidatedModel, cfg: &CharacteristicsConfig) -> Result<CharacteristicsEstimate> {
    cfg.validate()?;
    let d = model.dim();
    let eps = cfg.eps;
    let horizon = cfg.t / (eps * eps);
    let moments: Vec<FamilyMoments> =
        model.jumps().iter().map(|f| family_moments(&f.sizes, d, eps, &cfg.truncation, &cfg.test)).collect();
    let zero = vec![0.0; d];
    let per_path = farm(cfg.n_paths, |i| {
        let mut rng = path_rng(cfg.seed, i as u64);
        let mut stepper = Stepper::new(model, &mut rng);
        let mut x = zero.clone();
        let mut sink = Integrals::new(model, &x);
        if horizon > 0.0 {
            run_to_horizon(&mut stepper, &mut x, horizon, cfg.dt.min(horizon), &mut rng, &mut sink)?;
        }
        let mut lambda = sink.lambda;
        for (k, f) in model.jumps().iter().enumerate() {
            if !sink.vary_lambda[k] {
                lambda[k] = f.intensity.eval_scalar_unchecked(&zero) * horizon;
            }
        }
        let mut c = sink.c;
        if !sink.vary_c {
            model.diffusion().eval_packed(&zero, &mut c);
            c.iter_mut().for_each(|v| *v *= horizon);
        }
        // per-path values of B, C̃ (row-major) and the flow
        let mut b = vec![0.0; d];
        let mut ct = vec![0.0; d * d];
        let mut flow = 0.0;
        for i in 0..d {
            for j in 0..d {
                ct[i * d + j] = eps * eps * c[packed_index(d, i.min(j), i.max(j))];
            }
        }
        for (l, m) in lambda.iter().zip(&moments) {
            for i in 0..d {
                b[i] += l * m.b[i];
                for j in 0..d {
                    ct[i * d + j] += l * m.hh[(i, j)];
                }
            }
            flow += l * m.g;
        }
        Ok((b, ct, flow))
    })?;
    let col = |f: &dyn Fn(&(Vec<f64>, Vec<f64>, f64)) -> f64| -> (f64, f64) {
        let xs: Vec<f64> = per_path.iter().map(f).collect();
        crate::stats::mean_se(&xs)
    };
    let (bh, bh_se): (Vec<f64>, Vec<f64>) = (0..d).map(|i| col(&|p| p.0[i])).unzip();
    let (ctilde, ctilde_se): (Vec<f64>, Vec<f64>) = (0..d * d).map(|k| col(&|p| p.1[k])).unzip();
    let (g_n, g_n_se) = col(&|p| p.2);
    Ok(CharacteristicsEstimate { eps, t: cfg.t, n_paths: cfg.n_paths, bh, bh_se, ctilde, ctilde_se, g_n, g_n_se })
}

/// `B(h)ᵉ_t` with standard errors.
pub fn estimate_bh(model: &ValidatedModel, cfg: &CharacteristicsConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let e = estimate_characteristics(model, cfg)?;
    Ok((e.bh, e.bh_se))
}

/// `C̃(h)ᵉ_t` with entrywise standard errors.
pub fn estimate_ctilde(model: &ValidatedModel, cfg: &CharacteristicsConfig) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let e = estimate_characteristics(model, cfg)?;
    let d = model.dim();
    Ok((DMatrix::from_row_slice(d, d, &e.ctilde), DMatrix::from_row_slice(d, d, &e.ctilde_se)))
}

/// The big-jump flow `∫₀ᵗ ∫ g Nᵉ` with its standard error.
pub fn estimate_bigjump_flow(model: &ValidatedModel, cfg: &CharacteristicsConfig) -> Result<(f64, f64)> {
    let e = estimate_characteristics(model, cfg)?;
    Ok((e.g_n, e.g_n_se))
}

/// Verdicts of an ε-sweep of the characteristics.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CharacteristicsSweep {
    pub eps: Vec<f64>,
    pub estimates: Vec<CharacteristicsEstimate>,
    /// Row-major `tΣ`.
    pub limit_ctilde: Vec<f64>,
    pub bh_deviation: Vec<(f64, f64)>,
    pub ctilde_deviation: Vec<(f64, f64)>,
    pub bh_nonincreasing: bool,
    pub bh_final_within_3se: bool,
    pub ctilde_nonincreasing: bool,
    pub ctilde_final_within_3se: bool,
    pub flow_strictly_decreasing: bool,
    pub flow_final_small: bool,
    pub passed: bool,
}

/// Largest final big-jump flow accepted.
pub const FLOW_TOL: f64 = 1e-3;

/// `a_{k+1} ≤ a_k + 2·√(se_k² + se_{k+1}²)` for consecutive entries.
pub fn nonincreasing_within(dev: &[(f64, f64)], k_se: f64) -> bool {
    dev.windows(2).all(|w| w[1].0 <= w[0].0 + k_se * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt())
}

/// Run [`estimate_characteristics`] for each ε (strictly decreasing) and compare with
/// the limits `0`, `tΣ` and `0`.
pub fn characteristics_sweep(
    model: &ValidatedModel,
    eps_list: &[f64],
    base: &CharacteristicsConfig,
    sigma: &DMatrix<f64>,
) -> Result<CharacteristicsSweep> {
    if eps_list.is_empty() || eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("ε list must be nonempty and strictly decreasing".into()));
    }
    let d = model.dim();
    if sigma.nrows() != d {
        return Err(Error::Dimension(format!("Σ is {}x{} for a {d}-dimensional model", sigma.nrows(), sigma.ncols())));
    }
    let estimates = eps_list
        .iter()
        .map(|&eps| estimate_characteristics(model, &CharacteristicsConfig { eps, ..base.clone() }))
        .collect::<Result<Vec<_>>>()?;
    let bh: Vec<(f64, f64)> = estimates.iter().map(|e| e.bh_deviation()).collect();
    let ct: Vec<(f64, f64)> = estimates.iter().map(|e| e.ctilde_deviation(sigma)).collect();
    let flows: Vec<f64> = estimates.iter().map(|e| e.g_n).collect();
    let last = estimates.len() - 1;
    let bh_nonincreasing = nonincreasing_within(&bh, 2.0);
    let bh_final = bh[last].0 <= 3.0 * bh[last].1;
    let ct_nonincreasing = nonincreasing_within(&ct, 2.0);
    let ct_final = ct[last].0 <= 3.0 * ct[last].1;
    let flow_dec = flows.windows(2).all(|w| w[1] < w[0]);
    let flow_small = flows[last].abs() <= FLOW_TOL;
    Ok(CharacteristicsSweep {
        eps: eps_list.to_vec(),
        limit_ctilde: sigma.transpose().iter().map(|v| v * base.t).collect(),
        passed: bh_nonincreasing && bh_final && ct_final && flow_dec && flow_small,
        estimates,
        bh_deviation: bh,
        ctilde_deviation: ct,
        bh_nonincreasing,
        bh_final_within_3se: bh_final,
        ctilde_nonincreasing: ct_nonincreasing,
        ctilde_final_within_3se: ct_final,
        flow_strictly_decreasing: flow_dec,
        flow_final_small: flow_small,
    })
}
