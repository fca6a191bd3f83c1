//! First-exit times of `εF_{t/ε²}` (or of a Brownian motion with covariance Σ) from a
//! bounded domain, and Monte Carlo solutions of the Dirichlet problem
//! `Au + a·u = f` in `O`, `u = g` on `∂O`, via
//! `u(x) = E[g(X_T)·e^{∫₀ᵀ a} − ∫₀ᵀ f(X_s)·e^{∫₀ˢ a} ds]`.
//!
//! Exit is detected after each Euler step and after each jump; there is no bridge
//! correction, so the overshoot bias is `O(√dt)`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use evalexpr::{build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Model, ValidatedModel};
use crate::report::write_csv;
use crate::rng::{derive_seed, farm, path_rng};
use crate::sim::{StepOutcome, StepSink, Stepper, MAX_DT};
use crate::stats::mean_se;

/// Default cap on Euler steps per path.
pub const MAX_STEPS: usize = 1_000_000;
/// Largest tolerated fraction of censored paths.
pub const MAX_CENSORED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Domain {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    #[serde(rename_all = "camelCase")]
    Annulus { center: Vec<f64>, r_inner: f64, r_outer: f64 },
}

impl Domain {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) || center.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("ball needs a finite center and positive radius, got {radius}")));
        }
        Ok(Self::Ball { center, radius })
    }

    pub fn unit_ball(d: usize) -> Self {
        Self::Ball { center: vec![0.0; d], radius: 1.0 }
    }

    pub fn cube(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::Config("box needs lo < hi componentwise".into()));
        }
        Ok(Self::Box { lo, hi })
    }

    pub fn annulus(center: Vec<f64>, r_inner: f64, r_outer: f64) -> Result<Self> {
        if !(r_inner > 0.0 && r_inner < r_outer && r_outer.is_finite()) {
            return Err(Error::Config(format!("annulus needs 0 < r_inner < r_outer, got {r_inner}, {r_outer}")));
        }
        Ok(Self::Annulus { center, r_inner, r_outer })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Ball { center, .. } | Self::Annulus { center, .. } => center.len(),
            Self::Box { lo, .. } => lo.len(),
        }
    }

    /// Signed distance-like excess: negative inside, zero on the boundary, positive outside.
    pub fn excess(&self, x: &[f64]) -> f64 {
        match self {
            Self::Ball { center, radius } => dist(x, center) - radius,
            Self::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).map(|(v, (a, b))| (a - v).max(v - b)).fold(f64::NEG_INFINITY, f64::max),
            Self::Annulus { center, r_inner, r_outer } => {
                let r = dist(x, center);
                (r_inner - r).max(r - r_outer)
            }
        }
    }

    /// Open interior membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.excess(x) < 0.0
    }

    /// Nearest boundary point of an exterior point (used to evaluate boundary data).
    pub fn project_boundary(&self, x: &[f64]) -> Vec<f64> {
        let radial = |center: &[f64], r: f64| -> Vec<f64> {
            let n = dist(x, center);
            if n == 0.0 {
                let mut p = center.to_vec();
                p[0] += r;
                return p;
            }
            center.iter().zip(x).map(|(c, v)| c + r * (v - c) / n).collect()
        };
        match self {
            Self::Ball { center, radius } => radial(center, *radius),
            Self::Box { lo, hi } => {
                let mut p: Vec<f64> = x.iter().zip(lo.iter().zip(hi)).map(|(v, (a, b))| v.clamp(*a, *b)).collect();
                if self.contains(&p) {
                    // interior point: push to the nearest face
                    let (k, to_lo) = p
                        .iter()
                        .enumerate()
                        .flat_map(|(k, v)| [(k, true, v - lo[k]), (k, false, hi[k] - v)])
                        .min_by(|a, b| a.2.total_cmp(&b.2))
                        .map(|(k, s, _)| (k, s))
                        .expect("nonempty box");
                    p[k] = if to_lo { lo[k] } else { hi[k] };
                }
                p
            }
            Self::Annulus { center, r_inner, r_outer } => {
                let r = dist(x, center);
                if (r - r_inner).abs() < (r - r_outer).abs() {
                    radial(center, *r_inner)
                } else {
                    radial(center, *r_outer)
                }
            }
        }
    }

    /// The domain scaled by `s` about the origin.
    pub fn scaled(&self, s: f64) -> Self {
        let sc = |v: &[f64]| v.iter().map(|x| x * s).collect::<Vec<f64>>();
        match self {
            Self::Ball { center, radius } => Self::Ball { center: sc(center), radius: radius * s },
            Self::Box { lo, hi } => Self::Box { lo: sc(lo), hi: sc(hi) },
            Self::Annulus { center, r_inner, r_outer } => Self::Annulus { center: sc(center), r_inner: r_inner * s, r_outer: r_outer * s },
        }
    }

    /// A regular grid of interior points used for sign checks.
    fn sample_points(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        let (lo, hi): (Vec<f64>, Vec<f64>) = match self {
            Self::Ball { center, radius } => (center.iter().map(|c| c - radius).collect(), center.iter().map(|c| c + radius).collect()),
            Self::Annulus { center, r_outer, .. } => (center.iter().map(|c| c - r_outer).collect(), center.iter().map(|c| c + r_outer).collect()),
            Self::Box { lo, hi } => (lo.clone(), hi.clone()),
        };
        let total = per_axis.pow(d as u32);
        (0..total)
            .map(|mut idx| {
                (0..d)
                    .map(|k| {
                        let i = idx % per_axis;
                        idx /= per_axis;
                        lo[k] + (i as f64 + 0.5) / per_axis as f64 * (hi[k] - lo[k])
                    })
                    .collect::<Vec<f64>>()
            })
            .filter(|p| self.contains(p))
            .collect()
    }
}

fn dist(x: &[f64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// The process whose exit is observed.
#[derive(Debug, Clone)]
pub enum ExitProcess {
    /// `εF_{t/ε²}` for a validated model.
    Scaled { model: ValidatedModel, eps: f64 },
    /// Brownian motion with covariance Σ, simulated by the same Euler machinery.
    Brownian { model: ValidatedModel },
}

impl ExitProcess {
    pub fn scaled(model: ValidatedModel, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive, got {eps}")));
        }
        Ok(Self::Scaled { model, eps })
    }

    pub fn brownian(sigma: &DMatrix<f64>) -> Result<Self> {
        let d = sigma.nrows();
        Ok(Self::Brownian { model: ValidatedModel::new(Model::levy(&vec![0.0; d], sigma, vec![])?)? })
    }

    fn parts(&self) -> (&ValidatedModel, f64) {
        match self {
            Self::Scaled { model, eps } => (model, *eps),
            Self::Brownian { model } => (model, 1.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.parts().0.dim()
    }

    pub fn has_jumps(&self) -> bool {
        self.parts().0.has_jumps()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExitConfig {
    pub n: usize,
    /// Step in the time units of the observed process.
    pub dt: f64,
    pub seed: u64,
    pub max_steps: usize,
}

impl ExitConfig {
    pub fn new(n: usize, dt: f64, seed: u64) -> Self {
        Self { n, dt, seed, max_steps: MAX_STEPS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExitSample {
    pub time: f64,
    pub point: Vec<f64>,
    pub censored: bool,
    /// How far outside the domain the detected exit point lies.
    pub overshoot: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExitRun {
    pub samples: Vec<ExitSample>,
    pub censored: usize,
}

impl ExitRun {
    /// Exit times of uncensored paths.
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().filter(|s| !s.censored).map(|s| s.time).collect()
    }

    pub fn mean_time(&self) -> (f64, f64) {
        mean_se(&self.times())
    }

    /// CSV with columns `time, x1..xd, censored`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let d = self.samples.first().map_or(0, |s| s.point.len());
        let header: Vec<String> = std::iter::once("time".to_string())
            .chain((1..=d).map(|k| format!("x{k}")))
            .chain(std::iter::once("censored".to_string()))
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_csv(
            path,
            &header,
            self.samples.iter().map(|s| {
                let mut row = vec![s.time];
                row.extend(&s.point);
                row.push(if s.censored { 1.0 } else { 0.0 });
                row
            }),
        )
    }
}

/// Observes one path in the coordinates of the observed process.
struct Watch<'a, F: FnMut(&[f64], f64) -> Result<()>> {
    domain: &'a Domain,
    eps: f64,
    time: f64,
    /// State at the start of the current segment.
    prev: Vec<f64>,
    scratch: Vec<f64>,
    exited: bool,
    /// Left-point integrand hook `(state, duration)`.
    on_segment: F,
    error: Option<Error>,
}

impl<F: FnMut(&[f64], f64) -> Result<()>> Watch<'_, F> {
    fn check(&mut self, x: &[f64]) -> bool {
        for (s, v) in self.scratch.iter_mut().zip(x) {
            *s = self.eps * v;
        }
        self.prev.copy_from_slice(&self.scratch);
        if !self.domain.contains(&self.scratch) {
            self.exited = true;
        }
        self.exited
    }
}

impl<F: FnMut(&[f64], f64) -> Result<()>> StepSink for Watch<'_, F> {
    fn segment(&mut self, h: f64, x: &[f64]) -> bool {
        let hs = h * self.eps * self.eps;
        if let Err(e) = (self.on_segment)(&self.prev, hs) {
            self.error = Some(e);
            return true;
        }
        self.time += hs;
        self.check(x)
    }

    fn jump(&mut self, _y: &[f64], x: &[f64]) -> bool {
        self.check(x)
    }
}

fn check_start(process: &ExitProcess, domain: &Domain, x0: &[f64], cfg: &ExitConfig) -> Result<()> {
    let d = process.dim();
    if domain.dim() != d || x0.len() != d {
        return Err(Error::Dimension(format!("domain, start point and process dimensions differ ({}, {}, {d})", domain.dim(), x0.len())));
    }
    if !domain.contains(x0) {
        return Err(Error::Config(format!("start point {x0:?} is not in the domain interior")));
    }
    let (_, eps) = process.parts();
    if !(cfg.dt > 0.0 && cfg.dt / (eps * eps) <= MAX_DT) {
        return Err(Error::Config(format!("step {} gives an unscaled step above {MAX_DT}", cfg.dt)));
    }
    if cfg.n == 0 || cfg.max_steps == 0 {
        return Err(Error::Config("need at least one path and one step".into()));
    }
    Ok(())
}

/// Simulate one path until exit or the step cap. Returns `(time, exit point, censored)`.
fn run_path<F: FnMut(&[f64], f64) -> Result<()>>(
    process: &ExitProcess,
    domain: &Domain,
    x0: &[f64],
    cfg: &ExitConfig,
    seed: u64,
    stream: u64,
    on_segment: F,
) -> Result<(f64, Vec<f64>, bool)> {
    let (model, eps) = process.parts();
    let h = cfg.dt / (eps * eps);
    let mut rng = path_rng(seed, stream);
    let mut stepper = Stepper::new(model, &mut rng);
    let mut x: Vec<f64> = x0.iter().map(|v| v / eps).collect();
    let mut watch = Watch { domain, eps, time: 0.0, prev: x0.to_vec(), scratch: x0.to_vec(), exited: false, on_segment, error: None };
    for _ in 0..cfg.max_steps {
        if let StepOutcome::Stopped = stepper.step(&mut x, h, &mut rng, &mut watch)? {
            if let Some(e) = watch.error.take() {
                return Err(e);
            }
            return Ok((watch.time, watch.prev.clone(), false));
        }
    }
    Ok((watch.time, watch.prev.clone(), true))
}

fn censoring_guard(censored: usize, n: usize) -> Result<()> {
    let frac = censored as f64 / n as f64;
    if frac > MAX_CENSORED_FRACTION {
        return Err(Error::Config(format!(
            "{censored} of {n} paths hit the step cap ({:.2}% > 1%); the configuration is rejected",
            100.0 * frac
        )));
    }
    Ok(())
}

/// `n` exit samples from `x0`. Path `i` uses stream `i` of `cfg.seed`.
pub fn exit_samples(process: &ExitProcess, domain: &Domain, x0: &[f64], cfg: &ExitConfig) -> Result<ExitRun> {
    check_start(process, domain, x0, cfg)?;
    let samples = farm(cfg.n, |i| {
        let (time, point, censored) = run_path(process, domain, x0, cfg, cfg.seed, i as u64, |_, _| Ok(()))?;
        let overshoot = domain.excess(&point).max(0.0);
        Ok(ExitSample { time, point, censored, overshoot })
    })?;
    let censored = samples.iter().filter(|s| s.censored).count();
    if censored > 0 {
        log::warn!("{censored} exit paths censored at {} steps", cfg.max_steps);
    }
    censoring_guard(censored, cfg.n)?;
    Ok(ExitRun { samples, censored })
}

/// A scalar function of position, given as a constant or closure or a parsed expression in the
/// variables `x1, …, xd` (built-in `math::sin`, `math::exp`, … are available).
#[derive(Clone)]
pub enum ScalarFn {
    Constant(f64),
    Closure(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
    Expr { source: String, node: Arc<Node<DefaultNumericTypes>> },
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::Closure(_) => f.write_str("Closure(..)"),
            Self::Expr { source, .. } => write!(f, "Expr({source:?})"),
        }
    }
}

impl ScalarFn {
    pub fn closure<F: Fn(&[f64]) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Self::Closure(Arc::new(f))
    }

    /// Parse an expression; expressions without variables collapse to constants.
    pub fn parse(source: &str, d: usize) -> Result<Self> {
        let node = build_operator_tree::<DefaultNumericTypes>(source).map_err(|e| Error::Parse(format!("expression {source:?}: {e}")))?;
        let allowed: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
        let vars: Vec<String> = node.iter_variable_identifiers().map(str::to_string).collect();
        if let Some(bad) = vars.iter().find(|v| !allowed.contains(v)) {
            return Err(Error::Parse(format!("expression {source:?}: unknown variable {bad:?} (use x1..x{d})")));
        }
        let f = Self::Expr { source: source.to_string(), node: Arc::new(node) };
        if vars.is_empty() {
            return Ok(Self::Constant(f.eval(&vec![0.0; d])?));
        }
        f.eval(&vec![0.0; d])?;
        Ok(f)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            Self::Constant(c) => Ok(*c),
            Self::Closure(f) => Ok(f(x)),
            Self::Expr { source, node } => {
                let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
                for (k, v) in x.iter().enumerate() {
                    ctx.set_value(format!("x{}", k + 1), Value::Float(*v))
                        .map_err(|e| Error::Parse(format!("expression {source:?}: {e}")))?;
                }
                node.eval_number_with_context(&ctx).map_err(|e| Error::Parse(format!("expression {source:?}: {e}")))
            }
        }
    }

    fn constant(&self) -> Option<f64> {
        match self {
            Self::Constant(c) => Some(*c),
            _ => None,
        }
    }
}

/// `Au + a·u = f` in the domain, `u = g` on its boundary, with `a ≤ 0`.
#[derive(Debug, Clone)]
pub struct DirichletProblem {
    pub domain: Domain,
    pub a: ScalarFn,
    pub f: ScalarFn,
    pub g: ScalarFn,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DirichletValue {
    pub point: Vec<f64>,
    pub value: f64,
    pub se: f64,
    pub n_effective: usize,
    pub censored: usize,
}

fn potential_error(x: &[f64], v: f64) -> Error {
    Error::Config(format!("potential a(x) = {v} > 0 at {x:?}; the representation needs a ≤ 0"))
}

/// Feynman–Kac estimate of `u` at each point. Point `j` uses seed `derive_seed(seed, j)`,
/// so different processes share random numbers point by point.
pub fn dirichlet_mc(problem: &DirichletProblem, process: &ExitProcess, points: &[Vec<f64>], cfg: &ExitConfig) -> Result<Vec<DirichletValue>> {
    if process.has_jumps() {
        return Err(Error::Unsupported("the Dirichlet representation is implemented for diffusions without jumps".into()));
    }
    for p in problem.domain.sample_points(16) {
        let v = problem.a.eval(&p)?;
        if v > 0.0 {
            return Err(potential_error(&p, v));
        }
    }
    let a_const = problem.a.constant();
    let f_const = problem.f.constant();
    points
        .iter()
        .enumerate()
        .map(|(j, x0)| {
            check_start(process, &problem.domain, x0, cfg)?;
            let seed = derive_seed(cfg.seed, j as u64);
            let per_path = farm(cfg.n, |i| {
                let (mut big_a, mut integral) = (0.0f64, 0.0f64);
                let (_, point, censored) = run_path(process, &problem.domain, x0, cfg, seed, i as u64, |x, hs| {
                    let fv = match f_const {
                        Some(c) => c,
                        None => problem.f.eval(x)?,
                    };
                    let av = match a_const {
                        Some(c) => c,
                        None => problem.a.eval(x)?,
                    };
                    if av > 0.0 {
                        return Err(potential_error(x, av));
                    }
                    integral += fv * big_a.exp() * hs;
                    big_a += av * hs;
                    Ok(())
                })?;
                if censored {
                    return Ok(None);
                }
                let g = problem.g.eval(&problem.domain.project_boundary(&point))?;
                Ok(Some(g * big_a.exp() - integral))
            })?;
            let values: Vec<f64> = per_path.iter().flatten().copied().collect();
            let censored = cfg.n - values.len();
            censoring_guard(censored, cfg.n)?;
            let (value, se) = mean_se(&values);
            Ok(DirichletValue { point: x0.clone(), value, se, n_effective: values.len(), censored })
        })
        .collect()
}

/// Result of comparing `u_ε(x)` with the homogenized `u(x)` over a sweep of ε.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DirichletSweep {
    pub point: Vec<f64>,
    pub eps: Vec<f64>,
    pub values: Vec<DirichletValue>,
    pub reference: DirichletValue,
    pub gaps: Vec<f64>,
    pub combined_se: Vec<f64>,
    /// Each gap is below the previous one.
    pub strictly_decreasing: bool,
    /// Each gap is below the previous one up to two combined standard errors (informational).
    pub decreasing_within_noise: bool,
    pub final_within_3se: bool,
    pub passed: bool,
}

/// `u_ε(x0)` for each ε against `u(x0)` for the Brownian motion with covariance `sigma`.
pub fn dirichlet_sweep(
    model: &ValidatedModel,
    sigma: &DMatrix<f64>,
    problem: &DirichletProblem,
    x0: &[f64],
    eps_list: &[f64],
    cfg: &ExitConfig,
) -> Result<DirichletSweep> {
    if eps_list.is_empty() || eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("ε list must be nonempty and strictly decreasing".into()));
    }
    let points = vec![x0.to_vec()];
    let reference = dirichlet_mc(problem, &ExitProcess::brownian(sigma)?, &points, cfg)?.remove(0);
    let values = eps_list
        .iter()
        .map(|&eps| Ok(dirichlet_mc(problem, &ExitProcess::scaled(model.clone(), eps)?, &points, cfg)?.remove(0)))
        .collect::<Result<Vec<_>>>()?;
    let gaps: Vec<f64> = values.iter().map(|v| (v.value - reference.value).abs()).collect();
    let combined_se: Vec<f64> = values.iter().map(|v| (v.se * v.se + reference.se * reference.se).sqrt()).collect();
    let strictly = gaps.windows(2).all(|w| w[1] < w[0]);
    let within = gaps
        .windows(2)
        .zip(combined_se.windows(2))
        .all(|(g, s)| g[1] <= g[0] + 2.0 * (s[0] * s[0] + s[1] * s[1]).sqrt());
    let last = gaps.len() - 1;
    let final_ok = gaps[last] <= 3.0 * combined_se[last];
    Ok(DirichletSweep {
        point: x0.to_vec(),
        eps: eps_list.to_vec(),
        values,
        reference,
        passed: within && final_ok,
        gaps,
        combined_se,
        strictly_decreasing: strictly,
        decreasing_within_noise: within,
        final_within_3se: final_ok,
    })
}

/// Check that the step does not overshoot by more than a few diffusive step lengths.
pub fn max_overshoot(run: &ExitRun) -> f64 {
    run.samples.iter().map(|s| s.overshoot).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn domain_geometry() {
        let b = Domain::unit_ball(2);
        assert!(b.contains(&[0.5, 0.5]));
        assert!(!b.contains(&[1.0, 0.0]));
        let p = b.project_boundary(&[2.0, 0.0]);
        assert!((crate::model::norm(&p) - 1.0).abs() < 1e-15);
        let bx = Domain::cube(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        assert_eq!(bx.project_boundary(&[1.5, 1.0]), vec![1.0, 1.0]);
        let an = Domain::annulus(vec![0.0, 0.0], 0.5, 1.0).unwrap();
        assert!(!an.contains(&[0.1, 0.0]) && an.contains(&[0.75, 0.0]));
        assert_eq!(an.project_boundary(&[0.2, 0.0]), vec![0.5, 0.0]);
        assert!(Domain::annulus(vec![0.0], 1.0, 0.5).is_err());
        assert!(Domain::ball(vec![0.0], 0.0).is_err());
    }

    proptest! {
        #[test]
        fn projection_lands_on_boundary(x in prop::collection::vec(-3.0f64..3.0, 2)) {
            let b = Domain::unit_ball(2);
            prop_assume!(!b.contains(&x));
            prop_assert!(b.excess(&b.project_boundary(&x)).abs() < 1e-12);
        }
    }

    #[test]
    fn expressions() {
        let f = ScalarFn::parse("x1 * x1 + 2 * x2", 2).unwrap();
        assert_eq!(f.eval(&[3.0, 0.5]).unwrap(), 10.0);
        assert!(matches!(ScalarFn::parse("-1", 2).unwrap(), ScalarFn::Constant(c) if c == -1.0));
        assert!(ScalarFn::parse("y + 1", 2).is_err());
        let s = ScalarFn::parse("math::sin(x1)", 1).unwrap();
        assert!((s.eval(&[1.0]).unwrap() - 1f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_start() {
        let p = ExitProcess::brownian(&DMatrix::identity(2, 2)).unwrap();
        let cfg = ExitConfig::new(10, 1e-3, 1);
        assert!(exit_samples(&p, &Domain::unit_ball(2), &[1.5, 0.0], &cfg).is_err());
        assert!(exit_samples(&p, &Domain::unit_ball(1), &[0.0], &cfg).is_err());
    }

    #[test]
    fn boundary_adjacent_start_exits_fast() {
        let p = ExitProcess::brownian(&DMatrix::identity(2, 2)).unwrap();
        let run = exit_samples(&p, &Domain::unit_ball(2), &[0.999, 0.0], &ExitConfig::new(500, 1e-5, 2)).unwrap();
        let (m, _) = run.mean_time();
        assert!(m < 5e-3, "{m}");
        assert!(run.samples.iter().all(|s| s.time > 0.0 && !Domain::unit_ball(2).contains(&s.point)));
    }

    #[test]
    fn censoring_is_rejected() {
        let p = ExitProcess::brownian(&DMatrix::identity(1, 1)).unwrap();
        let mut cfg = ExitConfig::new(50, 1e-4, 3);
        cfg.max_steps = 10;
        assert!(exit_samples(&p, &Domain::unit_ball(1), &[0.0], &cfg).is_err());
    }

    #[test]
    fn constant_boundary_data() {
        let p = ExitProcess::brownian(&DMatrix::identity(2, 2)).unwrap();
        let prob = DirichletProblem {
            domain: Domain::unit_ball(2),
            a: ScalarFn::Constant(0.0),
            f: ScalarFn::Constant(0.0),
            g: ScalarFn::Constant(1.0),
        };
        let v = dirichlet_mc(&prob, &p, &[vec![0.0, 0.0], vec![0.5, 0.0]], &ExitConfig::new(200, 1e-3, 4)).unwrap();
        for r in v {
            assert_eq!(r.value, 1.0);
            assert_eq!(r.se, 0.0);
        }
    }

    #[test]
    fn positive_potential_aborts() {
        let p = ExitProcess::brownian(&DMatrix::identity(2, 2)).unwrap();
        let prob = DirichletProblem {
            domain: Domain::unit_ball(2),
            a: ScalarFn::parse("x1", 2).unwrap(),
            f: ScalarFn::Constant(0.0),
            g: ScalarFn::Constant(1.0),
        };
        assert!(dirichlet_mc(&prob, &p, &[vec![0.0, 0.0]], &ExitConfig::new(10, 1e-3, 4)).is_err());
    }

    #[test]
    fn killing_reduces_value() {
        // a = −1 on the unit interval, g = 1: u(0) = 1/cosh(√2) for ½u'' − u = 0.
        let p = ExitProcess::brownian(&DMatrix::identity(1, 1)).unwrap();
        let prob = DirichletProblem {
            domain: Domain::unit_ball(1),
            a: ScalarFn::Constant(-1.0),
            f: ScalarFn::Constant(0.0),
            g: ScalarFn::Constant(1.0),
        };
        let v = &dirichlet_mc(&prob, &p, &[vec![0.0]], &ExitConfig::new(4000, 1e-4, 5)).unwrap()[0];
        let exact = 1.0 / 2f64.sqrt().cosh();
        assert!((v.value - exact).abs() < 4.0 * v.se + 0.01, "{} vs {exact}", v.value);
    }

    #[test]
    fn dirichlet_rejects_jumps() {
        let m = ValidatedModel::new(
            Model::levy(&[0.0], &DMatrix::identity(1, 1), vec![(1.0, crate::model::SizeDistribution::uniform_ball(0.5))]).unwrap(),
        )
        .unwrap();
        let prob = DirichletProblem {
            domain: Domain::unit_ball(1),
            a: ScalarFn::Constant(0.0),
            f: ScalarFn::Constant(-1.0),
            g: ScalarFn::Constant(0.0),
        };
        let p = ExitProcess::scaled(m, 0.5).unwrap();
        assert!(dirichlet_mc(&prob, &p, &[vec![0.0]], &ExitConfig::new(10, 1e-3, 1)).is_err());
    }
}
