//! Euler–Maruyama simulation of the jump-diffusion with jumps by thinning.
//!
//! Between jumps the state follows `X += b_eff(X)·h + σ(X)·√h·Z` with `σ = c^{1/2}` and
//! `b_eff(x) = b(x) − ∫_{|y|≤1} y ν(x, dy)`, which turns the compensated small jumps of the
//! generator into an uncompensated compound-Poisson part. Jump proposals come from a
//! Poisson clock of rate `Λ̄`; a proposal at time `s` is accepted with probability
//! `Λ(X_{s−})/Λ̄`, where `X_{s−}` is the Euler value at `s`.

use std::io::Write;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::field::Shape;
use crate::linalg;
use crate::model::{DiffusionRoot, ValidatedModel, PSD_TOL};
use crate::rng::{farm, path_rng, PathRng};

/// Largest admissible time step.
pub const MAX_DT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Step of the unscaled process.
    pub dt: f64,
    /// Horizon in the time units of the (scaled) process `εF_{t/ε²}`.
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub epsilon: f64,
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64, n_paths: usize, seed: u64) -> Self {
        Self { dt, horizon, n_paths, seed, epsilon: 1.0 }
    }

    pub fn with_epsilon(mut self, eps: f64) -> Self {
        self.epsilon = eps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(Error::Config(format!("dt must lie in (0, {MAX_DT}], got {}", self.dt)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.unscaled_horizon() >= self.dt) {
            return Err(Error::Config(format!(
                "dt {} must not exceed the horizon {}",
                self.dt,
                self.unscaled_horizon()
            )));
        }
        if self.n_paths == 0 {
            return Err(Error::Config("n_paths must be at least 1".into()));
        }
        Ok(())
    }

    fn unscaled_horizon(&self) -> f64 {
        self.horizon / (self.epsilon * self.epsilon)
    }
}

/// One simulated trajectory. States are càdlàg: at a jump time the recorded state is
/// the post-jump value.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `(time, jump vector)` for each accepted jump.
    pub jump_marks: Vec<(f64, Vec<f64>)>,
    pub seed: u64,
    pub stream: u64,
}

/// Observer of the stepper. Returning `true` stops the path at the current state.
pub(crate) trait StepSink {
    /// A diffusion (sub)step of length `h` ended at `x` (pre-jump value when a jump follows).
    fn segment(&mut self, _h: f64, _x: &[f64]) -> bool {
        false
    }
    /// A jump `y` was accepted; `x` is the post-jump state.
    fn jump(&mut self, _y: &[f64], _x: &[f64]) -> bool {
        false
    }
}

pub(crate) struct NoSink;
impl StepSink for NoSink {}

pub(crate) enum StepOutcome {
    Completed,
    /// A sink asked to stop.
    Stopped,
}

/// Per-path simulation state.
pub(crate) struct Stepper<'a> {
    model: &'a ValidatedModel,
    d: usize,
    packed: Vec<f64>,
    sigma: Vec<f64>,
    drift: Vec<f64>,
    noise: Vec<f64>,
    jump: Vec<f64>,
    rates: Vec<f64>,
    rate_bound: f64,
    /// Time left until the next proposal of the Poisson clock.
    clock: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(model: &'a ValidatedModel, rng: &mut PathRng) -> Self {
        let d = model.dim();
        let rate_bound = model.rate_bound();
        let clock = if rate_bound > 0.0 { rng.sample::<f64, _>(Exp1) / rate_bound } else { f64::INFINITY };
        let sigma = match &model.pre().root {
            DiffusionRoot::Constant(s) => s.clone(),
            _ => vec![0.0; d * d],
        };
        Self {
            model,
            d,
            packed: vec![0.0; Shape::Matrix(d).packed_len()],
            sigma,
            drift: vec![0.0; d],
            noise: vec![0.0; d],
            jump: vec![0.0; d],
            rates: vec![0.0; model.jumps().len()],
            rate_bound,
            clock,
        }
    }

    fn euler(&mut self, x: &mut [f64], h: f64, rng: &mut PathRng) -> Result<()> {
        if h <= 0.0 {
            return Ok(());
        }
        let d = self.d;
        let pre = self.model.pre();
        if !pre.drift_zero || pre.compensated {
            if pre.drift_zero {
                self.drift.iter_mut().for_each(|v| *v = 0.0);
            } else {
                self.model.drift().eval_packed(x, &mut self.drift);
            }
            if pre.compensated {
                for (f, mean) in self.model.jumps().iter().zip(&pre.small_means) {
                    let lam = f.intensity.eval_scalar_unchecked(x);
                    for (b, m) in self.drift.iter_mut().zip(mean) {
                        *b -= lam * m;
                    }
                }
            }
        }
        let sq = h.sqrt();
        for z in self.noise.iter_mut() {
            *z = rng.sample::<f64, _>(StandardNormal) * sq;
        }
        match &pre.root {
            DiffusionRoot::Constant(_) => {}
            DiffusionRoot::Diagonal => {
                self.model.diffusion().eval_packed(x, &mut self.packed);
                for (i, c) in linalg::packed_diagonal(d, &self.packed).enumerate() {
                    if c < -PSD_TOL {
                        return Err(Error::NotPsd(c));
                    }
                    self.sigma[i * d + i] = c.max(0.0).sqrt();
                }
            }
            DiffusionRoot::General => {
                self.model.diffusion().eval_packed(x, &mut self.packed);
                linalg::sqrt_psd_packed(d, &self.packed, &mut self.sigma, PSD_TOL).map_err(Error::NotPsd)?;
            }
        }
        let add_drift = !pre.drift_zero || pre.compensated;
        for i in 0..d {
            let row = &self.sigma[i * d..(i + 1) * d];
            let mut inc: f64 = row.iter().zip(&self.noise).map(|(s, z)| s * z).sum();
            if add_drift {
                inc += self.drift[i] * h;
            }
            x[i] += inc;
        }
        Ok(())
    }

    /// Advance `x` by `dt`, inserting proposed jump times as extra grid points.
    pub fn step<S: StepSink>(&mut self, x: &mut [f64], dt: f64, rng: &mut PathRng, sink: &mut S) -> Result<StepOutcome> {
        let mut rem = dt;
        while self.clock < rem {
            let h = self.clock;
            self.euler(x, h, rng)?;
            rem -= h;
            if sink.segment(h, x) {
                return Ok(StepOutcome::Stopped);
            }
            self.clock = rng.sample::<f64, _>(Exp1) / self.rate_bound;
            let mut total = 0.0;
            for (r, f) in self.rates.iter_mut().zip(self.model.jumps()) {
                *r = f.intensity.eval_scalar_unchecked(x);
                total += *r;
            }
            if total > self.rate_bound * (1.0 + 1e-12) {
                return Err(Error::MajorantViolated { rate: total, bound: self.rate_bound });
            }
            let u: f64 = rng.random::<f64>() * self.rate_bound;
            if u < total {
                let mut acc = 0.0;
                let mut k = self.rates.len() - 1;
                for (i, r) in self.rates.iter().enumerate() {
                    acc += r;
                    if u < acc {
                        k = i;
                        break;
                    }
                }
                self.model.jumps()[k].sizes.sample(rng, &mut self.jump);
                for (xi, yi) in x.iter_mut().zip(&self.jump) {
                    *xi += yi;
                }
                if sink.jump(&self.jump, x) {
                    return Ok(StepOutcome::Stopped);
                }
            }
        }
        self.euler(x, rem, rng)?;
        self.clock -= rem;
        if sink.segment(rem, x) {
            return Ok(StepOutcome::Stopped);
        }
        Ok(StepOutcome::Completed)
    }
}

/// Step lengths covering `[0, horizon]` with step `dt`; the last step may be shorter.
pub(crate) fn step_count(horizon: f64, dt: f64) -> usize {
    ((horizon / dt) - 1e-9).ceil().max(0.0) as usize
}

/// Run `steps` Euler steps (last one trimmed to land on `horizon`).
pub(crate) fn run_to_horizon<S: StepSink>(
    stepper: &mut Stepper<'_>,
    x: &mut [f64],
    horizon: f64,
    dt: f64,
    rng: &mut PathRng,
    sink: &mut S,
) -> Result<()> {
    let n = step_count(horizon, dt);
    for k in 0..n {
        let h = if k + 1 == n { horizon - dt * k as f64 } else { dt };
        stepper.step(x, h, rng, sink)?;
    }
    Ok(())
}

struct Recorder {
    eps: f64,
    t: f64,
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    marks: Vec<(f64, Vec<f64>)>,
}

impl StepSink for Recorder {
    fn segment(&mut self, h: f64, x: &[f64]) -> bool {
        self.t += h;
        self.times.push(self.t * self.eps * self.eps);
        self.states.push(x.iter().map(|v| v * self.eps).collect());
        false
    }

    fn jump(&mut self, y: &[f64], x: &[f64]) -> bool {
        if let Some(last) = self.states.last_mut() {
            last.iter_mut().zip(x).for_each(|(s, v)| *s = v * self.eps);
        }
        self.marks.push((self.t * self.eps * self.eps, y.iter().map(|v| v * self.eps).collect()));
        false
    }
}

/// Simulate one path of `εF_{s/ε²}`, `s ∈ [0, cfg.horizon]`, started at `F_0 = x0/ε`,
/// using random stream `stream` of `cfg.seed`.
pub fn simulate_path(model: &ValidatedModel, x0: &[f64], cfg: &SimConfig, stream: u64) -> Result<PathSample> {
    cfg.validate()?;
    check_point(model, x0)?;
    let eps = cfg.epsilon;
    let mut rng = path_rng(cfg.seed, stream);
    let mut stepper = Stepper::new(model, &mut rng);
    let mut x: Vec<f64> = x0.iter().map(|v| v / eps).collect();
    let mut rec = Recorder { eps, t: 0.0, times: vec![0.0], states: vec![x0.to_vec()], marks: Vec::new() };
    run_to_horizon(&mut stepper, &mut x, cfg.unscaled_horizon(), cfg.dt, &mut rng, &mut rec)?;
    Ok(PathSample { times: rec.times, states: rec.states, jump_marks: rec.marks, seed: cfg.seed, stream })
}

/// All paths of `cfg`, in stream order.
pub fn simulate_paths(model: &ValidatedModel, x0: &[f64], cfg: &SimConfig) -> Result<Vec<PathSample>> {
    cfg.validate()?;
    farm(cfg.n_paths, |i| simulate_path(model, x0, cfg, i as u64))
}

pub(crate) fn check_point(model: &ValidatedModel, x0: &[f64]) -> Result<()> {
    if x0.len() != model.dim() {
        return Err(Error::Dimension(format!("start point has {} coordinates, model has {}", x0.len(), model.dim())));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("start point must be finite".into()));
    }
    Ok(())
}

/// `n` independent samples of `ε·F_{t/ε²}` with `F_0 = 0`, unscaled step `dt`.
pub fn scaled_samples(model: &ValidatedModel, eps: f64, t: f64, n: usize, seed: u64, dt: f64) -> Result<Vec<Vec<f64>>> {
    scaled_samples_from(model, &vec![0.0; model.dim()], eps, t, n, seed, dt)
}

/// As [`scaled_samples`], started from the scaled point `x0` (`F_0 = x0/ε`).
pub fn scaled_samples_from(
    model: &ValidatedModel,
    x0: &[f64],
    eps: f64,
    t: f64,
    n: usize,
    seed: u64,
    dt: f64,
) -> Result<Vec<Vec<f64>>> {
    check_point(model, x0)?;
    if t == 0.0 {
        return Ok(vec![x0.to_vec(); n]);
    }
    SimConfig { dt, horizon: t, n_paths: n, seed, epsilon: eps }.validate()?;
    let horizon = t / (eps * eps);
    farm(n, |i| {
        let mut rng = path_rng(seed, i as u64);
        let mut stepper = Stepper::new(model, &mut rng);
        let mut x: Vec<f64> = x0.iter().map(|v| v / eps).collect();
        run_to_horizon(&mut stepper, &mut x, horizon, dt, &mut rng, &mut NoSink)?;
        Ok(x.into_iter().map(|v| v * eps).collect())
    })
}

/// Pathwise check of the diffusive scaling identity for a model without jumps.
///
/// The base model is simulated with step `dt` up to `t/ε²`; the rescaled model
/// (coefficients `b(x/ε)/ε`, `c(x/ε)`) is simulated with step `ε²·dt` up to `t` using
/// the same normal draws. Returns whether `ε·X_k` and `Y_k` agree within `1e-10` at every
/// step.
pub fn scaling_identity_check(model: &ValidatedModel, eps: f64, t: f64, seed: u64, dt: f64) -> Result<bool> {
    Ok(scaling_identity_defect(model, eps, t, seed, dt)? <= 1e-10)
}

/// Largest pathwise discrepancy `|ε·X_k − Y_k|` in the scaling identity check.
pub fn scaling_identity_defect(model: &ValidatedModel, eps: f64, t: f64, seed: u64, dt: f64) -> Result<f64> {
    if model.has_jumps() {
        return Err(Error::Unsupported("scaling identity is matched pathwise only without jumps".into()));
    }
    let rescaled = ValidatedModel::new(model.rescaled(eps)?)?;
    let d = model.dim();
    let base = collect_states(model, d, t / (eps * eps), dt, seed)?;
    let scaled = collect_states(&rescaled, d, t, eps * eps * dt, seed)?;
    if base.len() != scaled.len() {
        return Err(Error::Config("step grids of the two simulations differ".into()));
    }
    Ok(base
        .iter()
        .zip(&scaled)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (eps * p - q).abs()))
        .fold(0.0, f64::max))
}

fn collect_states(model: &ValidatedModel, d: usize, horizon: f64, dt: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    struct Collect(Vec<Vec<f64>>);
    impl StepSink for Collect {
        fn segment(&mut self, _h: f64, x: &[f64]) -> bool {
            self.0.push(x.to_vec());
            false
        }
    }
    let mut rng = path_rng(seed, 0);
    let mut stepper = Stepper::new(model, &mut rng);
    let mut x = vec![0.0; d];
    let mut sink = Collect(Vec::new());
    run_to_horizon(&mut stepper, &mut x, horizon, dt, &mut rng, &mut sink)?;
    Ok(sink.0)
}

/// Write paths as CSV with columns `pathId,t,x1..xd,isJump`.
pub fn write_paths_csv<W: Write>(paths: &[PathSample], mut w: W) -> Result<()> {
    let d = paths.first().map_or(0, |p| p.states[0].len());
    let cols: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    writeln!(w, "pathId,t,{},isJump", cols.join(","))?;
    for p in paths {
        let mut marks = p.jump_marks.iter().map(|m| m.0).peekable();
        for (t, x) in p.times.iter().zip(&p.states) {
            let is_jump = marks.peek().is_some_and(|&mt| mt == *t);
            if is_jump {
                marks.next();
            }
            let xs: Vec<String> = x.iter().map(|v| crate::report::fmt_f64(*v)).collect();
            writeln!(w, "{},{},{},{}", p.stream, crate::report::fmt_f64(*t), xs.join(","), u8::from(is_jump))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Period, PeriodicField, Term};
    use crate::model::{Model, SizeDistribution};
    use nalgebra::DMatrix;

    fn brownian(d: usize) -> ValidatedModel {
        ValidatedModel::new(Model::levy(&vec![0.0; d], &DMatrix::identity(d, d), vec![]).unwrap()).unwrap()
    }

    fn harmonic() -> ValidatedModel {
        let p = Period::unit(1);
        let c = PeriodicField::new(
            Shape::Matrix(1),
            p.clone(),
            vec![Term::scalar(vec![0], 2.0, 0.0), Term::scalar(vec![1], 0.0, 1.0)],
        )
        .unwrap();
        ValidatedModel::new(Model::new(p, None, c, vec![]).unwrap()).unwrap()
    }

    #[test]
    fn config_invariants() {
        assert!(SimConfig::new(0.2, 1.0, 1, 0).validate().is_err());
        assert!(SimConfig::new(0.01, 0.005, 1, 0).validate().is_err());
        assert!(SimConfig::new(0.01, 1.0, 0, 0).validate().is_err());
        assert!(SimConfig::new(0.01, 1.0, 1, 0).validate().is_ok());
    }

    #[test]
    fn zero_model_stays_put() {
        let m = ValidatedModel::new(Model::levy(&[0.0, 0.0], &DMatrix::zeros(2, 2), vec![]).unwrap()).unwrap();
        let p = simulate_path(&m, &[0.3, -1.0], &SimConfig::new(0.01, 1.0, 1, 5), 0).unwrap();
        assert!(p.states.iter().all(|s| s == &vec![0.3, -1.0]));
        assert!(p.jump_marks.is_empty());
    }

    #[test]
    fn deterministic_and_increasing_times() {
        let m = ValidatedModel::new(
            Model::levy(&[0.0], &DMatrix::identity(1, 1), vec![(3.0, SizeDistribution::uniform_ball(0.5))]).unwrap(),
        )
        .unwrap();
        let cfg = SimConfig::new(0.05, 2.0, 2, 11);
        let a = simulate_path(&m, &[0.0], &cfg, 1).unwrap();
        let b = simulate_path(&m, &[0.0], &cfg, 1).unwrap();
        assert_eq!(a, b);
        assert!(a.times.windows(2).all(|w| w[1] > w[0]));
        assert!(a.jump_marks.iter().all(|(t, _)| a.times.contains(t)));
        assert!((a.times.last().unwrap() - 2.0).abs() < 1e-12);
        assert!(!a.jump_marks.is_empty());
    }

    #[test]
    fn one_step_moments() {
        let m = brownian(2);
        let dt = 0.01;
        let n = 100_000;
        let xs = scaled_samples(&m, 1.0, dt, n, 3, dt).unwrap();
        for k in 0..2 {
            let mean = xs.iter().map(|x| x[k]).sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x[k] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!(mean.abs() < 4.0 * (dt / n as f64).sqrt());
            // Var of sample variance for normal data: 2σ⁴/(n−1)
            assert!((var - dt).abs() < 4.0 * dt * (2.0 / (n - 1) as f64).sqrt());
        }
    }

    #[test]
    fn zero_time_samples_are_origin() {
        let xs = scaled_samples(&harmonic(), 1.0, 0.0, 10, 0, 0.01).unwrap();
        assert!(xs.iter().all(|x| x == &vec![0.0]));
    }

    #[test]
    fn scaling_identity() {
        let h = harmonic();
        assert_eq!(scaling_identity_defect(&h, 1.0, 1.0, 9, 0.01).unwrap(), 0.0);
        assert!(scaling_identity_check(&h, 0.5, 1.0, 9, 0.01).unwrap());
        assert!(scaling_identity_check(&brownian(2), 0.25, 0.5, 2, 0.01).unwrap());
        let jumpy = ValidatedModel::new(
            Model::levy(&[0.0], &DMatrix::identity(1, 1), vec![(1.0, SizeDistribution::uniform_ball(0.5))]).unwrap(),
        )
        .unwrap();
        assert!(scaling_identity_check(&jumpy, 0.5, 1.0, 0, 0.01).is_err());
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let m = brownian(2);
        let paths = simulate_paths(&m, &[0.0, 0.0], &SimConfig::new(0.1, 0.5, 2, 1)).unwrap();
        let mut buf = Vec::new();
        write_paths_csv(&paths, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "pathId,t,x1,x2,isJump");
        assert_eq!(text.lines().count(), 1 + 2 * 6);
    }
}
