//! Jump-diffusion models with periodic Lévy triplet `(b, c, ν)` and their validation.
//!
//! The jump kernel is a finite mixture `ν(x, dy) = Σ_k λ_k(x) μ_k(dy)` with
//! state-independent size laws `μ_k`. The killing rate is identically zero.

use std::f64::consts::PI;
use std::ops::Deref;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Condition, Error, Result};
use crate::field::{Period, PeriodicField, Shape};
use crate::linalg;

/// Default validation grid resolution per axis.
pub const VALIDATION_GRID: usize = 64;
/// Eigenvalue tolerance for positive semidefiniteness.
pub const PSD_TOL: f64 = 1e-12;
/// Safety factor η in the thinning majorant `(1 + η)·max Λ`.
pub const MAJORANT_SAFETY: f64 = 0.1;
/// Number of quadrature nodes used to discretize a uniform ball.
pub const BALL_NODES: usize = 32;

const WEIGHT_TOL: f64 = 1e-12;
const MAX_VALIDATION_POINTS: usize = 1 << 18;

/// A weighted jump atom.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub weight: f64,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SizeKind {
    Atoms(Vec<Atom>),
    UniformBall { radius: f64 },
}

/// Jump-size probability law `μ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeDistribution {
    pub kind: SizeKind,
    /// Declared invariance under `y ↦ −y`.
    pub symmetric: bool,
}

impl SizeDistribution {
    pub fn atoms(atoms: Vec<(f64, Vec<f64>)>, symmetric: bool) -> Self {
        Self {
            kind: SizeKind::Atoms(atoms.into_iter().map(|(weight, y)| Atom { weight, y }).collect()),
            symmetric,
        }
    }

    pub fn uniform_ball(radius: f64) -> Self {
        Self { kind: SizeKind::UniformBall { radius }, symmetric: true }
    }

    fn check(&self, d: usize) -> Result<()> {
        match &self.kind {
            SizeKind::Atoms(atoms) => {
                if atoms.is_empty() {
                    return Err(size_err("atom list is empty"));
                }
                for a in atoms {
                    if a.y.len() != d {
                        return Err(Error::Dimension(format!("atom {:?} in dimension {d}", a.y)));
                    }
                    if !(a.weight.is_finite() && a.weight >= 0.0) || a.y.iter().any(|v| !v.is_finite()) {
                        return Err(size_err(&format!("invalid atom weight {} or location", a.weight)));
                    }
                }
                let total: f64 = atoms.iter().map(|a| a.weight).sum();
                if (total - 1.0).abs() > WEIGHT_TOL {
                    return Err(size_err(&format!("atom weights sum to {total}, expected 1")));
                }
                if self.symmetric && !atoms_closed_under_negation(atoms) {
                    return Err(size_err("declared symmetric but atoms are not closed under negation"));
                }
                Ok(())
            }
            SizeKind::UniformBall { radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(size_err(&format!("ball radius must be positive, got {radius}")));
                }
                Ok(())
            }
        }
    }

    /// Invariance under negation, either declared and verified or by construction.
    pub fn is_symmetric(&self) -> bool {
        match &self.kind {
            SizeKind::UniformBall { .. } => true,
            SizeKind::Atoms(a) => self.symmetric && atoms_closed_under_negation(a),
        }
    }

    /// Radius of the smallest centered ball containing the support.
    pub fn support_radius(&self) -> f64 {
        match &self.kind {
            SizeKind::UniformBall { radius } => *radius,
            SizeKind::Atoms(atoms) => atoms
                .iter()
                .filter(|a| a.weight > 0.0)
                .map(|a| norm(&a.y))
                .fold(0.0, f64::max),
        }
    }

    /// `∫ y yᵀ μ(dy)`.
    pub fn second_moment(&self, d: usize) -> DMatrix<f64> {
        match &self.kind {
            SizeKind::UniformBall { radius } => DMatrix::identity(d, d) * (radius * radius / (d as f64 + 2.0)),
            SizeKind::Atoms(atoms) => {
                let mut m = DMatrix::zeros(d, d);
                for a in atoms {
                    let y = DVector::from_column_slice(&a.y);
                    m += (&y * y.transpose()) * a.weight;
                }
                m
            }
        }
    }

    /// `∫ y μ(dy)` restricted to `|y| ≤ 1` (`small = true`) or `|y| > 1`.
    pub fn truncated_mean(&self, d: usize, small: bool) -> DVector<f64> {
        let mut m = DVector::zeros(d);
        if let SizeKind::Atoms(atoms) = &self.kind {
            if self.is_symmetric() {
                return m;
            }
            for a in atoms {
                if (norm(&a.y) <= 1.0) == small {
                    m += a.weight * DVector::from_column_slice(&a.y);
                }
            }
        }
        m
    }

    /// Draw one jump size into `out`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match &self.kind {
            SizeKind::Atoms(atoms) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = atoms.len() - 1;
                for (i, a) in atoms.iter().enumerate() {
                    acc += a.weight;
                    if u < acc {
                        chosen = i;
                        break;
                    }
                }
                out.copy_from_slice(&atoms[chosen].y);
            }
            SizeKind::UniformBall { radius } => {
                let d = out.len();
                if d == 1 {
                    out[0] = radius * (2.0 * rng.random::<f64>() - 1.0);
                    return;
                }
                let mut n2 = 0.0;
                for o in out.iter_mut() {
                    *o = rng.sample(StandardNormal);
                    n2 += *o * *o;
                }
                let r = radius * rng.random::<f64>().powf(1.0 / d as f64) / n2.sqrt();
                out.iter_mut().for_each(|o| *o *= r);
            }
        }
    }

    /// Finite quadrature used by grid oracles. Atoms are returned as-is; a uniform ball
    /// becomes [`BALL_NODES`] equal-weight nodes (midpoints on `[−r, r]` in `d = 1`,
    /// four equal-area rings of eight angles in `d = 2`). Both node sets are symmetric
    /// and reproduce `∫ y yᵀ μ(dy)` up to the midpoint error.
    pub fn quadrature(&self, d: usize) -> Result<Vec<Atom>> {
        match &self.kind {
            SizeKind::Atoms(a) => Ok(a.clone()),
            SizeKind::UniformBall { radius } => {
                let w = 1.0 / BALL_NODES as f64;
                match d {
                    1 => Ok((0..BALL_NODES)
                        .map(|j| Atom {
                            weight: w,
                            y: vec![-radius + (j as f64 + 0.5) * 2.0 * radius / BALL_NODES as f64],
                        })
                        .collect()),
                    2 => {
                        let (rings, angles) = (4, BALL_NODES / 4);
                        let mut out = Vec::with_capacity(BALL_NODES);
                        for ring in 0..rings {
                            let r = radius * ((ring as f64 + 0.5) / rings as f64).sqrt();
                            let offset = if ring % 2 == 0 { 0.0 } else { 0.5 };
                            for k in 0..angles {
                                let th = 2.0 * PI * (k as f64 + offset) / angles as f64;
                                out.push(Atom { weight: w, y: vec![r * th.cos(), r * th.sin()] });
                            }
                        }
                        Ok(out)
                    }
                    _ => Err(Error::Unsupported(format!("ball quadrature in dimension {d}"))),
                }
            }
        }
    }
}

fn atoms_closed_under_negation(atoms: &[Atom]) -> bool {
    atoms.iter().all(|a| {
        let mirrored: f64 = atoms
            .iter()
            .filter(|b| b.y.iter().zip(&a.y).all(|(p, q)| (p + q).abs() <= 1e-12))
            .map(|b| b.weight)
            .sum();
        let same: f64 = atoms
            .iter()
            .filter(|b| b.y.iter().zip(&a.y).all(|(p, q)| (p - q).abs() <= 1e-12))
            .map(|b| b.weight)
            .sum();
        (mirrored - same).abs() <= 1e-12
    })
}

fn size_err(detail: &str) -> Error {
    Error::Validation { condition: Condition::SizeLaw, detail: detail.to_string() }
}

pub(crate) fn norm(y: &[f64]) -> f64 {
    y.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// One component `λ_k(x) μ_k(dy)` of the jump kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpFamily {
    pub intensity: PeriodicField,
    pub sizes: SizeDistribution,
}

/// Periodic jump-diffusion model. Killing is fixed at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    period: Period,
    drift: PeriodicField,
    diffusion: PeriodicField,
    jumps: Vec<JumpFamily>,
}

impl Model {
    pub fn new(
        period: Period,
        drift: Option<PeriodicField>,
        diffusion: PeriodicField,
        jumps: Vec<JumpFamily>,
    ) -> Result<Self> {
        let d = period.dim();
        let drift = drift.unwrap_or_else(|| PeriodicField::zero(Shape::Vector(d), period.clone()));
        let same_period = |f: &PeriodicField, what: &str| -> Result<()> {
            if f.period() != &period {
                return Err(Error::Dimension(format!("{what} period {:?} differs from model period", f.period().as_slice())));
            }
            Ok(())
        };
        if drift.shape() != Shape::Vector(d) {
            return Err(Error::ShapeMismatch { expected: Shape::Vector(d).name(), found: drift.shape().name() });
        }
        if diffusion.shape() != Shape::Matrix(d) {
            return Err(Error::ShapeMismatch { expected: Shape::Matrix(d).name(), found: diffusion.shape().name() });
        }
        same_period(&drift, "drift")?;
        same_period(&diffusion, "diffusion")?;
        for f in &jumps {
            if f.intensity.shape() != Shape::Scalar {
                return Err(Error::ShapeMismatch { expected: "scalar".into(), found: f.intensity.shape().name() });
            }
            same_period(&f.intensity, "intensity")?;
        }
        Ok(Self { period, drift, diffusion, jumps })
    }

    /// Constant-coefficient (Lévy) model.
    pub fn levy(b: &[f64], c: &DMatrix<f64>, jumps: Vec<(f64, SizeDistribution)>) -> Result<Self> {
        let d = b.len();
        let period = Period::unit(d);
        let drift = PeriodicField::constant_vector(period.clone(), b)?;
        let diffusion = PeriodicField::constant_matrix(period.clone(), c)?;
        let jumps = jumps
            .into_iter()
            .map(|(rate, sizes)| JumpFamily { intensity: PeriodicField::constant_scalar(period.clone(), rate), sizes })
            .collect();
        Self::new(period, Some(drift), diffusion, jumps)
    }

    pub fn dim(&self) -> usize {
        self.period.dim()
    }

    pub fn period(&self) -> &Period {
        &self.period
    }

    pub fn drift(&self) -> &PeriodicField {
        &self.drift
    }

    pub fn diffusion(&self) -> &PeriodicField {
        &self.diffusion
    }

    pub fn jumps(&self) -> &[JumpFamily] {
        &self.jumps
    }

    pub fn has_jumps(&self) -> bool {
        !self.jumps.is_empty()
    }

    /// The model whose coefficients are `x ↦ b(x/ε)/ε, c(x/ε)`, i.e. the diffusive
    /// rescaling without jumps. Jump families are rescaled as `λ(x/ε)/ε²` with sizes `εy`
    /// only for atoms; ball laws are scaled in radius.
    pub fn rescaled(&self, eps: f64) -> Result<Self> {
        let jumps = self
            .jumps
            .iter()
            .map(|f| JumpFamily {
                intensity: f.intensity.rescaled(eps, 1.0 / (eps * eps)),
                sizes: match &f.sizes.kind {
                    SizeKind::Atoms(a) => SizeDistribution {
                        kind: SizeKind::Atoms(
                            a.iter()
                                .map(|a| Atom { weight: a.weight, y: a.y.iter().map(|v| v * eps).collect() })
                                .collect(),
                        ),
                        symmetric: f.sizes.symmetric,
                    },
                    SizeKind::UniformBall { radius } => SizeDistribution::uniform_ball(radius * eps),
                },
            })
            .collect();
        Self::new(
            self.period.scaled(eps),
            Some(self.drift.rescaled(eps, 1.0 / eps)),
            self.diffusion.rescaled(eps, 1.0),
            jumps,
        )
    }

    /// Total intensity `Λ(x) = Σ_k λ_k(x)`.
    pub fn total_intensity(&self, x: &[f64]) -> f64 {
        self.jumps.iter().map(|f| f.intensity.eval_scalar_unchecked(x)).sum()
    }

    /// `M(x) = Σ_k λ_k(x) ∫ y yᵀ μ_k(dy)`.
    pub fn jump_second_moment(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for f in &self.jumps {
            m += f.intensity.eval_scalar_unchecked(x) * f.sizes.second_moment(d);
        }
        m
    }

    /// `∫ y ν(x, dy)`.
    pub fn jump_first_moment(&self, x: &[f64]) -> DVector<f64> {
        let d = self.dim();
        let mut m = DVector::zeros(d);
        for f in &self.jumps {
            let mean = f.sizes.truncated_mean(d, true) + f.sizes.truncated_mean(d, false);
            m += f.intensity.eval_scalar_unchecked(x) * mean;
        }
        m
    }

    /// Points `(i_1/res·τ_1, …)` of the validation grid.
    pub fn grid_points(&self, res: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        let mut res = res.max(1);
        while res > 2 && res.pow(d as u32) > MAX_VALIDATION_POINTS {
            res /= 2;
        }
        let tau = self.period.as_slice();
        let total = res.pow(d as u32);
        (0..total)
            .map(|mut idx| {
                (0..d)
                    .map(|k| {
                        let i = idx % res;
                        idx /= res;
                        i as f64 / res as f64 * tau[k]
                    })
                    .collect()
            })
            .collect()
    }

    /// Thinning majorant `(1 + η)·max_grid Λ(x)`; zero without jumps.
    pub fn total_intensity_bound(&self, grid_res: usize) -> f64 {
        if self.jumps.is_empty() {
            return 0.0;
        }
        let max = self.grid_points(grid_res).iter().map(|x| self.total_intensity(x)).fold(0.0, f64::max);
        (1.0 + MAJORANT_SAFETY) * max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Holds for the supported model class; not checked numerically.
    Assumed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub condition: Condition,
    pub status: CheckStatus,
    pub witness: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<ConditionCheck>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn first_failure(&self) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.status == CheckStatus::Fail)
    }
}

/// Check the structural conditions on the validation grid.
pub fn validate_model(model: &Model) -> ValidationReport {
    validate_model_on_grid(model, VALIDATION_GRID)
}

pub fn validate_model_on_grid(model: &Model, res: usize) -> ValidationReport {
    let d = model.dim();
    let points = model.grid_points(res);
    let mut checks = Vec::new();
    fn push(checks: &mut Vec<ConditionCheck>, condition: Condition, ok: bool, witness: Option<f64>, detail: String) {
        checks.push(ConditionCheck {
            condition,
            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            witness,
            detail,
        })
    }

    push(&mut checks, Condition::C2, true, Some(0.0), "killing rate fixed at zero".into());

    let size_errors: Vec<String> = model
        .jumps
        .iter()
        .enumerate()
        .filter_map(|(k, f)| f.sizes.check(d).err().map(|e| format!("family {k}: {e}")))
        .collect();
    push(&mut checks, 
        Condition::SizeLaw,
        size_errors.is_empty(),
        None,
        if size_errors.is_empty() { "all size laws are probability measures".into() } else { size_errors.join("; ") },
    );

    let min_rate = model
        .jumps
        .iter()
        .flat_map(|f| points.iter().map(move |x| f.intensity.eval_scalar_unchecked(x)))
        .fold(f64::INFINITY, f64::min);
    let min_rate_w = if model.jumps.is_empty() { None } else { Some(min_rate) };
    push(&mut checks, 
        Condition::IntensityNonnegative,
        model.jumps.is_empty() || min_rate >= 0.0,
        min_rate_w,
        match min_rate_w {
            None => "no jump families".into(),
            Some(v) if v < 0.0 => format!("negative intensity {v} on the grid"),
            Some(v) => format!("min grid intensity {v}"),
        },
    );

    let mut buf = vec![0.0; Shape::Matrix(d).packed_len()];
    let min_eig = points
        .iter()
        .map(|x| {
            model.diffusion.eval_packed(x, &mut buf);
            linalg::min_eigenvalue_packed(d, &buf)
        })
        .fold(f64::INFINITY, f64::min);
    push(&mut checks, 
        Condition::DiffusionPsd,
        min_eig >= -PSD_TOL,
        Some(min_eig),
        format!("min grid eigenvalue of c: {min_eig}"),
    );

    checks.push(ConditionCheck {
        condition: Condition::C3,
        status: CheckStatus::Assumed,
        witness: Some(min_eig),
        detail: "transition density positivity holds for bounded trig-polynomial coefficients with finite-activity jumps".into(),
    });

    let defect = periodicity_defect(model, &points);
    push(&mut checks, Condition::C4, defect <= 1e-12, Some(defect), format!("max sampled periodicity defect {defect:e}"));

    let second = if size_errors.is_empty() {
        points.iter().map(|x| model.jump_second_moment(x).trace()).fold(0.0, f64::max)
    } else {
        f64::NAN
    };
    push(&mut checks, 
        Condition::C5,
        second.is_finite(),
        Some(second),
        format!("sup over grid of ∫|y|² ν(x,dy) = {second}"),
    );

    let offenders: Vec<usize> = model
        .jumps
        .iter()
        .enumerate()
        .filter(|(_, f)| !(f.sizes.is_symmetric() || f.sizes.support_radius() <= 1.0))
        .map(|(k, _)| k)
        .collect();
    push(&mut checks, 
        Condition::C6,
        offenders.is_empty(),
        None,
        if offenders.is_empty() {
            "every family is symmetric or supported in the closed unit ball".into()
        } else {
            format!("asymmetric family with support outside unit ball: families {offenders:?}")
        },
    );

    let passed = checks.iter().all(|c| c.status != CheckStatus::Fail);
    ValidationReport { checks, passed }
}

fn periodicity_defect(model: &Model, points: &[Vec<f64>]) -> f64 {
    let tau = model.period.as_slice();
    let shifts: [f64; 3] = [1.0, -3.0, 7.0];
    let mut worst: f64 = 0.0;
    let fields = std::iter::once(&model.drift)
        .chain(std::iter::once(&model.diffusion))
        .chain(model.jumps.iter().map(|f| &f.intensity));
    for f in fields {
        let n = f.shape().packed_len();
        let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
        for (i, x) in points.iter().enumerate().step_by(17) {
            let k = shifts[i % 3];
            let shifted: Vec<f64> = x.iter().zip(tau).map(|(xi, ti)| xi + k * ti).collect();
            f.eval_packed(x, &mut a);
            f.eval_packed(&shifted, &mut b);
            for (p, q) in a.iter().zip(&b) {
                worst = worst.max((p - q).abs() / (1.0 + p.abs()));
            }
        }
    }
    worst
}

/// How the diffusion square root is obtained during simulation.
#[derive(Debug, Clone)]
pub(crate) enum DiffusionRoot {
    /// Constant `σ`, row-major.
    Constant(Vec<f64>),
    /// Diagonal `c(x)`: `σ_ii = √c_ii(x)`.
    Diagonal,
    General,
}

#[derive(Debug)]
pub(crate) struct Precomputed {
    pub rate_bound: f64,
    pub root: DiffusionRoot,
    pub drift_zero: bool,
    /// `∫_{|y|≤1} y μ_k(dy)` per family.
    pub small_means: Vec<Vec<f64>>,
    pub compensated: bool,
}

/// A model that passed validation. Immutable and cheap to clone.
#[derive(Debug, Clone)]
pub struct ValidatedModel {
    model: Arc<Model>,
    report: Arc<ValidationReport>,
    pre: Arc<Precomputed>,
}

impl ValidatedModel {
    pub fn new(model: Model) -> Result<Self> {
        let report = validate_model(&model);
        if let Some(fail) = report.first_failure() {
            return Err(Error::Validation { condition: fail.condition, detail: fail.detail.clone() });
        }
        let d = model.dim();
        let root = if model.diffusion.is_constant() {
            let mut packed = vec![0.0; Shape::Matrix(d).packed_len()];
            model.diffusion.eval_packed(&vec![0.0; d], &mut packed);
            let mut sigma = vec![0.0; d * d];
            linalg::sqrt_psd_packed(d, &packed, &mut sigma, PSD_TOL).map_err(Error::NotPsd)?;
            DiffusionRoot::Constant(sigma)
        } else if model.diffusion.is_diagonal() {
            DiffusionRoot::Diagonal
        } else {
            DiffusionRoot::General
        };
        let small_means: Vec<Vec<f64>> =
            model.jumps.iter().map(|f| f.sizes.truncated_mean(d, true).as_slice().to_vec()).collect();
        let compensated = small_means.iter().flatten().any(|v| *v != 0.0);
        let pre = Precomputed {
            rate_bound: model.total_intensity_bound(VALIDATION_GRID),
            root,
            drift_zero: model.drift.is_identically_zero(),
            small_means,
            compensated,
        };
        Ok(Self { model: Arc::new(model), report: Arc::new(report), pre: Arc::new(pre) })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn report(&self) -> &ValidationReport {
        &self.report
    }

    /// The thinning majorant `Λ̄` at the default grid resolution.
    pub fn rate_bound(&self) -> f64 {
        self.pre.rate_bound
    }

    pub(crate) fn pre(&self) -> &Precomputed {
        &self.pre
    }
}

impl Deref for ValidatedModel {
    type Target = Model;
    fn deref(&self) -> &Model {
        &self.model
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Term;
    use proptest::prelude::*;

    fn identity_levy(jumps: Vec<(f64, SizeDistribution)>) -> Model {
        Model::levy(&[0.0, 0.0], &DMatrix::identity(2, 2), jumps).unwrap()
    }

    fn sine_intensity(period: Period, base: f64, amp: f64) -> PeriodicField {
        let d = period.dim();
        let mut f = vec![0; d];
        f[0] = 1;
        PeriodicField::new(
            Shape::Scalar,
            period,
            vec![Term::scalar(vec![0; d], base, 0.0), Term::scalar(f, 0.0, amp)],
        )
        .unwrap()
    }

    fn pm_atoms() -> SizeDistribution {
        SizeDistribution::atoms(vec![(0.5, vec![1.0, 0.0]), (0.5, vec![-1.0, 0.0])], true)
    }

    #[test]
    fn identity_no_jumps_passes() {
        let r = validate_model(&identity_levy(vec![]));
        assert!(r.passed);
        assert!(r.checks.iter().any(|c| c.condition == Condition::C6 && c.status == CheckStatus::Pass));
    }

    #[test]
    fn asymmetric_far_atom_fails_c6() {
        let m = identity_levy(vec![(1.0, SizeDistribution::atoms(vec![(1.0, vec![2.0, 0.0])], false))]);
        let r = validate_model(&m);
        assert!(!r.passed);
        assert_eq!(r.first_failure().unwrap().condition, Condition::C6);
        let err = ValidatedModel::new(m).unwrap_err();
        assert!(err.to_string().starts_with("C6 violated"));
    }

    #[test]
    fn indefinite_diffusion_fails_psd() {
        // c(x) = diag(1, −0.3 + 0)
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.3]);
        let m = Model::levy(&[0.0, 0.0], &c, vec![]).unwrap();
        let r = validate_model(&m);
        let f = r.first_failure().unwrap();
        assert_eq!(f.condition, Condition::DiffusionPsd);
        assert!((f.witness.unwrap() + 0.3).abs() < 1e-12);
    }

    #[test]
    fn negative_intensity_fails() {
        let p = Period::unit(1);
        let c = PeriodicField::constant_matrix(p.clone(), &DMatrix::identity(1, 1)).unwrap();
        let fam = JumpFamily { intensity: sine_intensity(p.clone(), 0.5, 1.0), sizes: SizeDistribution::uniform_ball(0.5) };
        let m = Model::new(p, None, c, vec![fam]).unwrap();
        assert_eq!(validate_model(&m).first_failure().unwrap().condition, Condition::IntensityNonnegative);
    }

    #[test]
    fn false_symmetry_claim_fails() {
        let m = identity_levy(vec![(1.0, SizeDistribution::atoms(vec![(1.0, vec![0.5, 0.0])], true))]);
        assert_eq!(validate_model(&m).first_failure().unwrap().condition, Condition::SizeLaw);
    }

    #[test]
    fn validation_is_pure() {
        let m = identity_levy(vec![(1.0, pm_atoms())]);
        assert_eq!(validate_model(&m), validate_model(&m));
    }

    #[test]
    fn intensity_bounds() {
        let m = identity_levy(vec![(3.0, pm_atoms())]);
        assert!((m.total_intensity_bound(64) - 3.3).abs() < 1e-12);
        assert_eq!(identity_levy(vec![]).total_intensity_bound(64), 0.0);

        let p = Period::unit(1);
        let c = PeriodicField::constant_matrix(p.clone(), &DMatrix::identity(1, 1)).unwrap();
        let fam = JumpFamily { intensity: sine_intensity(p.clone(), 2.0, 1.0), sizes: SizeDistribution::uniform_ball(0.5) };
        let m = Model::new(p, None, c, vec![fam]).unwrap();
        let grid_max = m.grid_points(64).iter().map(|x| m.total_intensity(x)).fold(0.0, f64::max);
        assert!((grid_max - 3.0).abs() < 1e-6);
        assert!((m.total_intensity_bound(64) - 3.3).abs() < 1e-6);
    }

    #[test]
    fn second_moments() {
        let m = identity_levy(vec![(1.0, pm_atoms())]);
        let mm = m.jump_second_moment(&[0.2, 0.7]);
        assert_eq!(mm, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));

        let m = identity_levy(vec![(2.0, SizeDistribution::uniform_ball(1.0))]);
        assert!((m.jump_second_moment(&[0.0, 0.0]) - DMatrix::identity(2, 2) * 0.5).abs().max() < 1e-15);

        let p = Period::unit(2);
        let c = PeriodicField::constant_matrix(p.clone(), &DMatrix::identity(2, 2)).unwrap();
        let fam = JumpFamily { intensity: sine_intensity(p.clone(), 2.0, 1.0), sizes: pm_atoms() };
        let m = Model::new(p, None, c, vec![fam]).unwrap();
        let mm = m.jump_second_moment(&[0.25, 0.0]);
        assert!((mm - DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 0.0])).abs().max() < 1e-14);
    }

    #[test]
    fn ball_quadrature_moments() {
        for d in [1usize, 2] {
            let s = SizeDistribution::uniform_ball(2.0);
            let q = s.quadrature(d).unwrap();
            assert_eq!(q.len(), BALL_NODES);
            let total: f64 = q.iter().map(|a| a.weight).sum();
            assert!((total - 1.0).abs() < 1e-14);
            let dist = SizeDistribution { kind: SizeKind::Atoms(q), symmetric: true };
            assert!(dist.is_symmetric());
            let exact = s.second_moment(d);
            let approx = dist.second_moment(d);
            assert!((exact - approx).abs().max() < 2e-3);
        }
    }

    proptest! {
        #[test]
        fn symmetric_families_have_zero_first_moment(
            x in prop::collection::vec(-5.0f64..5.0, 2),
            w in 0.01f64..0.99, a in -3.0f64..3.0, b in -3.0f64..3.0,
        ) {
            let sizes = SizeDistribution::atoms(vec![
                (w / 2.0, vec![a, b]), (w / 2.0, vec![-a, -b]),
                ((1.0 - w) / 2.0, vec![0.3, -a]), ((1.0 - w) / 2.0, vec![-0.3, a]),
            ], true);
            let p = Period::unit(2);
            let c = PeriodicField::constant_matrix(p.clone(), &DMatrix::identity(2, 2)).unwrap();
            let fam = JumpFamily { intensity: sine_intensity(p.clone(), 2.0, 1.0), sizes };
            let m = Model::new(p, None, c, vec![fam]).unwrap();
            prop_assert!(m.jump_first_moment(&x).amax() <= 1e-14);
            let mm = m.jump_second_moment(&x);
            prop_assert!((mm.clone() - mm.transpose()).amax() == 0.0);
            prop_assert!(linalg::min_eigenvalue(&mm) >= -1e-12);
        }
    }
}
