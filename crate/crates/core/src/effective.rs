//! Effective covariance of the homogenized Brownian motion.
//!
//! Three routes: the π-average `Σ = ∫ c dπ + ∫∫ y yᵀ ν(x,dy) π(dx)`, the exact Lévy
//! case with constant coefficients, and the corrector route for drifted diffusions,
//! `Σ̄ = ∫ (I − ∇β) c (I − ∇β)ᵀ dπ` with `Aβ_i = b_i − b̄_i`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{unpack_symmetric, Shape};
use crate::linalg;
use crate::model::{JumpFamily, ValidatedModel};
use crate::report::write_csv;
use crate::sim::scaled_samples;
use crate::stats::{covariance, CovarianceEstimate};
use crate::torus::{grid_generator, stationary_solve, InvariantMeasure, Provenance, TorusGrid, DENSE_LIMIT};

/// Largest corrector residual accepted.
pub const CORRECTOR_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum Method {
    Direct,
    Levy,
    Corrector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveCovariance {
    pub sigma: DMatrix<f64>,
    pub method: Method,
    /// How π was obtained, when it was used.
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SigmaExport {
    pub method: Method,
    pub dimension: usize,
    /// Row-major entries.
    pub sigma: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub provenance: Option<Provenance>,
}

impl EffectiveCovariance {
    fn new(mut sigma: DMatrix<f64>, method: Method, provenance: Option<Provenance>) -> Self {
        linalg::symmetrize(&mut sigma);
        Self { sigma, method, provenance }
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::sorted_eigenvalues(&self.sigma)
    }

    pub fn export(&self) -> SigmaExport {
        let d = self.dim();
        SigmaExport {
            method: self.method,
            dimension: d,
            sigma: (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| self.sigma[(i, j)]).collect(),
            eigenvalues: self.eigenvalues(),
            provenance: self.provenance,
        }
    }
}

fn check_grid(model: &ValidatedModel, grid: &TorusGrid) -> Result<()> {
    if grid.period() != model.period() {
        return Err(Error::GridMismatch(format!(
            "grid period {:?} differs from model period {:?}",
            grid.period().as_slice(),
            model.period().as_slice()
        )));
    }
    Ok(())
}

/// `Σ = Σ_cells π_i [c(x_i) + M(x_i)]` with `M(x) = ∫ y yᵀ ν(x,dy)`.
pub fn sigma_effective(model: &ValidatedModel, pi: &InvariantMeasure) -> Result<EffectiveCovariance> {
    check_grid(model, &pi.grid)?;
    let d = model.dim();
    let mut packed = vec![0.0; Shape::Matrix(d).packed_len()];
    let mut sigma = DMatrix::zeros(d, d);
    for (i, w) in pi.weights.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        let x = pi.grid.center(i);
        model.diffusion().eval_packed(&x, &mut packed);
        sigma += *w * (unpack_symmetric(d, &packed) + model.jump_second_moment(&x));
    }
    Ok(EffectiveCovariance::new(sigma, Method::Direct, Some(pi.provenance)))
}

/// Σ from the default oracle grid (`d ≤ 2`, diagonal `c`).
pub fn sigma_from_grid(model: &ValidatedModel) -> Result<(EffectiveCovariance, InvariantMeasure)> {
    let grid = TorusGrid::oracle_default(model.period())?;
    let q = grid_generator(model, &grid)?;
    let pi = stationary_solve(&q)?;
    Ok((sigma_effective(model, &pi)?, pi))
}

/// Lévy case with constant coefficients: returns the centering drift
/// `b + ∫_{|y|>1} y ν(dy)` and `Σ = c + ∫ y yᵀ ν(dy)`.
pub fn sigma_levy(b: &[f64], c: &DMatrix<f64>, nu: &[JumpFamily]) -> Result<(DVector<f64>, EffectiveCovariance)> {
    let d = b.len();
    if c.nrows() != d || c.ncols() != d {
        return Err(Error::ShapeMismatch { expected: format!("{d}x{d} diffusion"), found: format!("{}x{}", c.nrows(), c.ncols()) });
    }
    let mut centering = DVector::from_column_slice(b);
    let mut sigma = c.clone();
    for (k, f) in nu.iter().enumerate() {
        if !f.intensity.is_constant() {
            return Err(Error::Config(format!("jump family {k} has a non-constant intensity")));
        }
        let lam = f.intensity.eval_scalar_unchecked(&vec![0.0; d]);
        centering += lam * f.sizes.truncated_mean(d, false);
        sigma += lam * f.sizes.second_moment(d);
    }
    Ok((centering, EffectiveCovariance::new(sigma, Method::Levy, None)))
}

/// [`sigma_levy`] applied to a model whose coefficients are all constant.
pub fn sigma_levy_model(model: &ValidatedModel) -> Result<(DVector<f64>, EffectiveCovariance)> {
    if !model.drift().is_constant() || !model.diffusion().is_constant() {
        return Err(Error::Config("Lévy case needs constant drift and diffusion".into()));
    }
    let zero = vec![0.0; model.dim()];
    let b = model.drift().eval_vector(&zero)?;
    let c = model.diffusion().eval_matrix(&zero)?;
    sigma_levy(b.as_slice(), &c, model.jumps())
}

/// Periodic solution of the discrete cell problem `A_h β_i = b_i − b̄_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Corrector {
    pub grid: TorusGrid,
    /// `beta[i][cell]`.
    pub beta: Vec<Vec<f64>>,
    pub bbar: Vec<f64>,
    /// `max_i ‖A_h β_i − (b_i − b̄_i)‖∞`.
    pub residual: f64,
    pub pi: InvariantMeasure,
}

impl Corrector {
    /// CSV with columns `cellIndex, beta_1..beta_d`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let d = self.beta.len();
        let header: Vec<String> =
            std::iter::once("cellIndex".to_string()).chain((1..=d).map(|k| format!("beta_{k}"))).collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_csv(
            path,
            &header,
            (0..self.grid.n_cells()).map(|c| std::iter::once(c as f64).chain(self.beta.iter().map(|b| b[c])).collect()),
        )
    }
}

/// Solve the cell problem on `grid`. The nullspace of `A_h` is removed by the bordered
/// system `[[A_h, 1], [πᵀ, 0]]`, which imposes `Σ π β_i = 0`.
pub fn corrector_solve(model: &ValidatedModel, grid: &TorusGrid) -> Result<Corrector> {
    check_grid(model, grid)?;
    if model.has_jumps() {
        return Err(Error::Unsupported("the corrector is defined for diffusions without jumps".into()));
    }
    let n = grid.n_cells();
    if n > DENSE_LIMIT {
        return Err(Error::Unsupported(format!("corrector grid of {n} cells exceeds the dense limit {DENSE_LIMIT}")));
    }
    let q = grid_generator(model, grid)?;
    let pi = stationary_solve(&q)?;
    let d = model.dim();
    let mut bvals = vec![vec![0.0; n]; d];
    let mut buf = vec![0.0; d];
    for c in 0..n {
        model.drift().eval_packed(&grid.center(c), &mut buf);
        for i in 0..d {
            bvals[i][c] = buf[i];
        }
    }
    let bbar: Vec<f64> = bvals.iter().map(|b| b.iter().zip(&pi.weights).map(|(v, w)| v * w).sum()).collect();

    let qd = q.to_dense();
    let mut a = DMatrix::zeros(n + 1, n + 1);
    a.view_mut((0, 0), (n, n)).copy_from(&qd);
    for k in 0..n {
        a[(k, n)] = 1.0;
        a[(n, k)] = pi.weights[k];
    }
    let lu = a.clone().lu();
    let mut beta = Vec::with_capacity(d);
    let mut residual: f64 = 0.0;
    for i in 0..d {
        let mut rhs = DVector::zeros(n + 1);
        for k in 0..n {
            rhs[k] = bvals[i][k] - bbar[i];
        }
        let mut x = lu.solve(&rhs).ok_or_else(|| Error::Singular("corrector system".into()))?;
        let r = &rhs - &a * &x;
        if let Some(dx) = lu.solve(&r) {
            x += dx;
        }
        // a nonzero multiplier means the right-hand side is not orthogonal to π
        let multiplier = x[n];
        let bi: Vec<f64> = x.rows(0, n).iter().copied().collect();
        let applied = q.apply(&bi);
        let res = applied.iter().zip(&rhs.as_slice()[..n]).map(|(p, r)| (p - r).abs()).fold(0.0, f64::max);
        if multiplier.abs() > CORRECTOR_TOL || !res.is_finite() {
            return Err(Error::Singular(format!("inconsistent corrector system (multiplier {multiplier:e})")));
        }
        residual = residual.max(res);
        beta.push(bi);
    }
    if residual > CORRECTOR_TOL {
        return Err(Error::NoConvergence(format!("corrector residual {residual:e} exceeds {CORRECTOR_TOL:e}")));
    }
    Ok(Corrector { grid: grid.clone(), beta, bbar, residual, pi })
}

/// `Σ̄ = Σ_cells π [(I − ∇β) c (I − ∇β)ᵀ]` with periodic central differences for `∇β`.
pub fn sigma_bar(model: &ValidatedModel, corrector: &Corrector, pi: &InvariantMeasure) -> Result<EffectiveCovariance> {
    check_grid(model, &pi.grid)?;
    if corrector.grid != pi.grid {
        return Err(Error::GridMismatch("corrector and invariant measure grids differ".into()));
    }
    let d = model.dim();
    let grid = &pi.grid;
    let mut packed = vec![0.0; Shape::Matrix(d).packed_len()];
    let mut sigma = DMatrix::zeros(d, d);
    for (cell, w) in pi.weights.iter().enumerate() {
        let mut j = DMatrix::<f64>::identity(d, d);
        for (i, b) in corrector.beta.iter().enumerate() {
            for k in 0..d {
                if grid.resolution()[k] < 2 {
                    continue;
                }
                let up = b[grid.neighbor(cell, k, 1)];
                let down = b[grid.neighbor(cell, k, -1)];
                j[(i, k)] -= (up - down) / (2.0 * grid.spacing(k));
            }
        }
        model.diffusion().eval_packed(&grid.center(cell), &mut packed);
        sigma += *w * (&j * unpack_symmetric(d, &packed) * j.transpose());
    }
    Ok(EffectiveCovariance::new(sigma, Method::Corrector, Some(pi.provenance)))
}

/// Monte Carlo long-run covariance `Cov(F_T)/T` from `F_0 = 0`, with entrywise
/// standard errors. Centering uses the sample mean.
pub fn long_run_covariance(model: &ValidatedModel, horizon: f64, n: usize, seed: u64, dt: f64) -> Result<CovarianceEstimate> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
    }
    let eps = horizon.sqrt().recip();
    covariance(&scaled_samples(model, eps, 1.0, n, seed, dt)?)
}
