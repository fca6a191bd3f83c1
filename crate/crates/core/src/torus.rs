//! The process projected on the torus `[0, τ)`: invariant measure by occupation
//! averages and by a finite-volume grid generator, and total-variation decay.

use std::collections::VecDeque;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{Period, Shape};
use crate::linalg;
use crate::model::ValidatedModel;
use crate::report::write_csv;
use crate::rng::{farm, path_rng};
use crate::sim::{step_count, NoSink, Stepper};

/// Largest cell count solved by a dense LU factorization.
pub const DENSE_LIMIT: usize = 4096;
/// Default oracle resolution per axis in `d = 1` and `d = 2`.
pub const ORACLE_RES_1D: usize = 256;
pub const ORACLE_RES_2D: usize = 32;

/// Componentwise `x mod τ` in `[0, τ_i)`.
pub fn project_torus(x: &[f64], period: &Period) -> Vec<f64> {
    x.iter().zip(period.as_slice()).map(|(&v, &t)| wrap(v, t)).collect()
}

#[inline]
fn wrap(v: f64, t: f64) -> f64 {
    let r = v.rem_euclid(t);
    if r >= t {
        0.0
    } else {
        r
    }
}

/// Regular cell grid on the torus. Cell `(i_1, …, i_d)` has linear index
/// `i_1 + n_1·(i_2 + n_2·(…))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusGrid {
    period: Period,
    res: Vec<usize>,
}

impl TorusGrid {
    pub fn new(period: Period, res: Vec<usize>) -> Result<Self> {
        if res.len() != period.dim() {
            return Err(Error::Dimension(format!("{} resolutions for a {}-dimensional torus", res.len(), period.dim())));
        }
        if res.iter().any(|&r| r == 0) {
            return Err(Error::Config("grid resolution must be positive".into()));
        }
        Ok(Self { period, res })
    }

    /// Same resolution on every axis.
    pub fn uniform(period: Period, res: usize) -> Result<Self> {
        let d = period.dim();
        Self::new(period, vec![res; d])
    }

    /// The default oracle grid for a model's dimension.
    pub fn oracle_default(period: &Period) -> Result<Self> {
        match period.dim() {
            1 => Self::uniform(period.clone(), ORACLE_RES_1D),
            2 => Self::uniform(period.clone(), ORACLE_RES_2D),
            d => Err(Error::Unsupported(format!("grid oracle in dimension {d}"))),
        }
    }

    pub fn period(&self) -> &Period {
        &self.period
    }

    pub fn resolution(&self) -> &[usize] {
        &self.res
    }

    pub fn dim(&self) -> usize {
        self.res.len()
    }

    pub fn n_cells(&self) -> usize {
        self.res.iter().product()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.period.as_slice()[axis] / self.res[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.spacing(k)).product()
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        self.res
            .iter()
            .map(|&r| {
                let i = idx % r;
                idx /= r;
                i
            })
            .collect()
    }

    fn linear_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.res).rev().fold(0, |acc, (&i, &r)| acc * r + i)
    }

    pub fn center(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx).iter().enumerate().map(|(k, &i)| (i as f64 + 0.5) * self.spacing(k)).collect()
    }

    pub fn centers(&self) -> Vec<Vec<f64>> {
        (0..self.n_cells()).map(|i| self.center(i)).collect()
    }

    /// Cell containing the torus projection of `x`.
    pub fn cell_of(&self, x: &[f64]) -> usize {
        let multi: Vec<usize> = x
            .iter()
            .zip(self.period.as_slice())
            .zip(&self.res)
            .map(|((&v, &t), &r)| ((wrap(v, t) / t * r as f64) as usize).min(r - 1))
            .collect();
        self.linear_index(&multi)
    }

    /// Neighbor of `idx` one cell along `axis` in direction `step` (±1), periodic.
    pub fn neighbor(&self, idx: usize, axis: usize, step: isize) -> usize {
        let mut m = self.multi_index(idx);
        let r = self.res[axis] as isize;
        m[axis] = ((m[axis] as isize + step).rem_euclid(r)) as usize;
        self.linear_index(&m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum Provenance {
    Occupation,
    GridSolve,
}

/// Probability weights over torus cells.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantMeasure {
    pub grid: TorusGrid,
    pub weights: Vec<f64>,
    pub provenance: Provenance,
}

impl InvariantMeasure {
    pub fn uniform(grid: TorusGrid) -> Self {
        let n = grid.n_cells();
        Self { grid, weights: vec![1.0 / n as f64; n], provenance: Provenance::GridSolve }
    }

    /// Total-variation distance `½ Σ |p_i − q_i|`.
    pub fn tv(&self, other: &Self) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("measures live on different grids".into()));
        }
        Ok(0.5 * self.weights.iter().zip(&other.weights).map(|(a, b)| (a - b).abs()).sum::<f64>())
    }

    /// `Σ_cells weight·f(center)`.
    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        self.weights.iter().enumerate().map(|(i, w)| w * f(&self.grid.center(i))).sum()
    }

    /// CSV with columns `cellIndex, c1..cd, weight`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let d = self.grid.dim();
        let mut header = vec!["cellIndex".to_string()];
        header.extend((1..=d).map(|k| format!("c{k}")));
        header.push("weight".into());
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_csv(
            path,
            &header,
            self.weights.iter().enumerate().map(|(i, w)| {
                let mut row = vec![i as f64];
                row.extend(self.grid.center(i));
                row.push(*w);
                row
            }),
        )
    }
}

/// Settings for the occupation-measure estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationConfig {
    pub burn_in: f64,
    /// Total simulated time per chain, burn-in included.
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    pub chains: usize,
}

impl OccupationConfig {
    /// One chain with the default burn-in of 10% of the horizon.
    pub fn new(horizon: f64, dt: f64, seed: u64) -> Self {
        Self { burn_in: 0.1 * horizon, horizon, dt, seed, chains: 1 }
    }

    pub fn with_chains(mut self, chains: usize) -> Self {
        self.chains = chains;
        self
    }
}

/// Histogram of the projected post-burn-in Euler states, merged over chains.
/// Chain `j` uses stream `j` and starts at the origin.
pub fn occupation_invariant(model: &ValidatedModel, grid: &TorusGrid, cfg: &OccupationConfig) -> Result<InvariantMeasure> {
    if grid.period() != model.period() {
        return Err(Error::GridMismatch("grid period differs from model period".into()));
    }
    if !(cfg.dt > 0.0 && cfg.dt <= crate::sim::MAX_DT) || !(cfg.horizon > cfg.burn_in) || cfg.burn_in < 0.0 || cfg.chains == 0 {
        return Err(Error::Config(format!("invalid occupation settings {cfg:?}")));
    }
    let d = model.dim();
    let n = grid.n_cells();
    let burn_steps = step_count(cfg.burn_in, cfg.dt);
    let total_steps = step_count(cfg.horizon, cfg.dt);
    let counts = farm(cfg.chains, |chain| {
        let mut rng = path_rng(cfg.seed, chain as u64);
        let mut stepper = Stepper::new(model, &mut rng);
        let mut x = vec![0.0; d];
        let mut hist = vec![0u64; n];
        for k in 0..total_steps {
            stepper.step(&mut x, cfg.dt, &mut rng, &mut NoSink)?;
            // keep the state near the fundamental cell to avoid losing precision
            if k % 1024 == 0 {
                x = project_torus(&x, model.period());
            }
            if k >= burn_steps {
                hist[grid.cell_of(&x)] += 1;
            }
        }
        Ok(hist)
    })?;
    let mut merged = vec![0u64; n];
    for h in counts {
        for (m, c) in merged.iter_mut().zip(h) {
            *m += c;
        }
    }
    let total: u64 = merged.iter().sum();
    if total == 0 {
        return Err(Error::Config("no post-burn-in samples".into()));
    }
    Ok(InvariantMeasure {
        grid: grid.clone(),
        weights: merged.iter().map(|&c| c as f64 / total as f64).collect(),
        provenance: Provenance::Occupation,
    })
}

/// Sparse generator of a continuous-time Markov chain on torus cells.
#[derive(Debug, Clone)]
pub struct RateMatrix {
    grid: TorusGrid,
    /// Off-diagonal rates `(target, rate)` per row, targets unique.
    rows: Vec<Vec<(usize, f64)>>,
    /// Quadrature atoms that landed in their source cell and were dropped.
    pub dropped_atoms: usize,
}

impl RateMatrix {
    /// Build from off-diagonal rates; duplicates are merged, self-loops ignored.
    pub fn from_rates(grid: TorusGrid, raw: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = grid.n_cells();
        if raw.len() != n {
            return Err(Error::Dimension(format!("{} rows for {n} cells", raw.len())));
        }
        let rows = raw
            .into_iter()
            .enumerate()
            .map(|(i, mut r)| {
                r.retain(|&(j, q)| j != i && q != 0.0);
                r.sort_by_key(|e| e.0);
                let mut merged: Vec<(usize, f64)> = Vec::with_capacity(r.len());
                for (j, q) in r {
                    match merged.last_mut() {
                        Some(last) if last.0 == j => last.1 += q,
                        _ => merged.push((j, q)),
                    }
                }
                merged
            })
            .collect();
        Ok(Self { grid, rows, dropped_atoms: 0 })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    /// Total exit rate of each cell, `−Q_ii`.
    pub fn exit_rates(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|e| e.1).sum()).collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut q = DMatrix::zeros(n, n);
        for (i, r) in self.rows.iter().enumerate() {
            let mut out = 0.0;
            for &(j, v) in r {
                q[(i, j)] += v;
                out += v;
            }
            q[(i, i)] -= out;
        }
        q
    }

    /// `(Q f)_i = Σ_j Q_ij (f_j − f_i)`, the generator acting on a grid function.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.rows.iter().enumerate().map(|(i, r)| r.iter().map(|&(j, q)| q * (f[j] - f[i])).sum()).collect()
    }

    /// `(π Q)_j`.
    pub fn left_apply(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, q) in r {
                out[j] += p[i] * q;
                out[i] -= p[i] * q;
            }
        }
        out
    }

    /// Uniformization rate `1.01·max_i |Q_ii|`.
    pub fn uniformization_rate(&self) -> f64 {
        1.01 * self.exit_rates().into_iter().fold(0.0, f64::max)
    }

    /// Dense `P = I + Q/λ_u`.
    pub fn uniformized(&self) -> (f64, DMatrix<f64>) {
        let lam = self.uniformization_rate();
        let n = self.n();
        if lam == 0.0 {
            return (0.0, DMatrix::identity(n, n));
        }
        (lam, DMatrix::identity(n, n) + self.to_dense() / lam)
    }

    fn is_irreducible(&self) -> bool {
        let n = self.n();
        let reach = |adj: &Vec<Vec<usize>>| {
            let mut seen = vec![false; n];
            let mut q = VecDeque::from([0usize]);
            seen[0] = true;
            while let Some(i) = q.pop_front() {
                for &j in &adj[i] {
                    if !seen[j] {
                        seen[j] = true;
                        q.push_back(j);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        let fwd: Vec<Vec<usize>> = self.rows.iter().map(|r| r.iter().filter(|e| e.1 > 0.0).map(|e| e.0).collect()).collect();
        let mut bwd = vec![Vec::new(); n];
        for (i, r) in fwd.iter().enumerate() {
            for &j in r {
                bwd[j].push(i);
            }
        }
        reach(&fwd) && reach(&bwd)
    }
}

/// Finite-volume generator of the torus process: diffusion `c_kk(center)/(2h_k²)` to each
/// axis neighbor, first-order upwind drift `b_eff`, and jump rate `λ_k(center)·w` to the
/// cell containing `center + y` for each quadrature node `(w, y)`.
pub fn grid_generator(model: &ValidatedModel, grid: &TorusGrid) -> Result<RateMatrix> {
    if grid.period() != model.period() {
        return Err(Error::GridMismatch("grid period differs from model period".into()));
    }
    let d = model.dim();
    if d > 2 {
        return Err(Error::Unsupported(format!("grid oracle in dimension {d}")));
    }
    if !(model.diffusion().is_diagonal() || d == 1) {
        return Err(Error::Unsupported("grid oracle requires a diagonal diffusion matrix".into()));
    }
    let families: Vec<Vec<crate::model::Atom>> =
        model.jumps().iter().map(|f| f.sizes.quadrature(d)).collect::<Result<_>>()?;
    let small_means: Vec<DVector<f64>> = model.jumps().iter().map(|f| f.sizes.truncated_mean(d, true)).collect();
    let n = grid.n_cells();
    let mut packed = vec![0.0; Shape::Matrix(d).packed_len()];
    let mut drift = vec![0.0; d];
    let mut dropped = 0usize;
    let mut raw = Vec::with_capacity(n);
    for i in 0..n {
        let x = grid.center(i);
        let mut row = Vec::new();
        model.diffusion().eval_packed(&x, &mut packed);
        model.drift().eval_packed(&x, &mut drift);
        let mut lambdas = Vec::with_capacity(families.len());
        for (f, m) in model.jumps().iter().zip(&small_means) {
            let lam = f.intensity.eval_scalar_unchecked(&x);
            for k in 0..d {
                drift[k] -= lam * m[k];
            }
            lambdas.push(lam);
        }
        for (k, c) in linalg::packed_diagonal(d, &packed).enumerate() {
            if grid.resolution()[k] < 2 {
                continue;
            }
            let h = grid.spacing(k);
            let diff = c / (2.0 * h * h);
            let up = diff + drift[k].max(0.0) / h;
            let down = diff + (-drift[k]).max(0.0) / h;
            row.push((grid.neighbor(i, k, 1), up));
            row.push((grid.neighbor(i, k, -1), down));
        }
        for (atoms, lam) in families.iter().zip(&lambdas) {
            for a in atoms {
                let target: Vec<f64> = x.iter().zip(&a.y).map(|(p, q)| p + q).collect();
                let j = grid.cell_of(&target);
                if j == i {
                    dropped += 1;
                    continue;
                }
                row.push((j, lam * a.weight));
            }
        }
        raw.push(row);
    }
    if dropped > 0 {
        log::warn!("{dropped} jump quadrature atoms map to their source cell and were dropped; refine the grid");
    }
    let mut q = RateMatrix::from_rates(grid.clone(), raw)?;
    q.dropped_atoms = dropped;
    Ok(q)
}

/// Solve `πQ = 0`, `Σπ = 1`: dense LU for at most [`DENSE_LIMIT`] cells, power iteration
/// on the uniformized chain otherwise.
pub fn stationary_solve(q: &RateMatrix) -> Result<InvariantMeasure> {
    let n = q.n();
    let grid = q.grid.clone();
    if n == 1 {
        return Ok(InvariantMeasure { grid, weights: vec![1.0], provenance: Provenance::GridSolve });
    }
    if !q.is_irreducible() {
        return Err(Error::Reducible);
    }
    let mut pi = if n <= DENSE_LIMIT { dense_stationary(q)? } else { power_stationary(q)? };
    for p in pi.iter_mut() {
        if *p < 0.0 {
            if *p < -1e-10 {
                return Err(Error::Singular(format!("negative stationary weight {p}")));
            }
            *p = 0.0;
        }
    }
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= s);
    Ok(InvariantMeasure { grid, weights: pi, provenance: Provenance::GridSolve })
}

fn dense_stationary(q: &RateMatrix) -> Result<Vec<f64>> {
    let n = q.n();
    let mut a = q.to_dense().transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let lu = a.clone().lu();
    let mut x = lu.solve(&rhs).ok_or_else(|| Error::Singular("stationary system".into()))?;
    // one step of iterative refinement
    let r = &rhs - &a * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    Ok(x.iter().copied().collect())
}

fn power_stationary(q: &RateMatrix) -> Result<Vec<f64>> {
    let n = q.n();
    let lam = q.uniformization_rate();
    let mut p = vec![1.0 / n as f64; n];
    let max_iter = 50_000_000 / n.max(1) + 100_000;
    for _ in 0..max_iter {
        let qp = q.left_apply(&p);
        let mut change = 0.0;
        for (pi, d) in p.iter_mut().zip(&qp) {
            let step = d / lam;
            *pi += step;
            change += step.abs();
        }
        if change <= 1e-14 {
            return Ok(p);
        }
    }
    Err(Error::NoConvergence("power iteration on the uniformized chain did not contract".into()))
}

/// `‖πQ‖∞`.
pub fn stationary_residual(q: &RateMatrix, pi: &InvariantMeasure) -> f64 {
    q.left_apply(&pi.weights).into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Max-over-start-cells total variation between the uniformized chain and `π` at each
/// requested time. The chain is `P = I + Q/λ_u`; time `t` corresponds to `round(λ_u t)`
/// steps. Output is sorted by time.
pub fn tv_decay(q: &RateMatrix, pi: &InvariantMeasure, times: &[f64]) -> Result<Vec<(f64, f64)>> {
    if times.len() < 3 {
        return Err(Error::Config("at least three times are needed to fit a decay rate".into()));
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::Config("times must be finite and nonnegative".into()));
    }
    if pi.grid != q.grid {
        return Err(Error::GridMismatch("invariant measure and generator grids differ".into()));
    }
    let (lam, p) = q.uniformized();
    let n = q.n();
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut current = DMatrix::<f64>::identity(n, n);
    let mut k_prev: u64 = 0;
    let mut out = Vec::with_capacity(sorted.len());
    for t in sorted {
        let k = (lam * t).round() as u64;
        if k > k_prev {
            current = &current * mat_pow(&p, k - k_prev);
            k_prev = k;
        }
        let tv = (0..n)
            .map(|i| 0.5 * (0..n).map(|j| (current[(i, j)] - pi.weights[j]).abs()).sum::<f64>())
            .fold(0.0, f64::max);
        out.push((t, tv));
    }
    Ok(out)
}

fn mat_pow(p: &DMatrix<f64>, mut k: u64) -> DMatrix<f64> {
    let n = p.nrows();
    let mut result = DMatrix::identity(n, n);
    let mut base = p.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = &result * &base;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    result
}

/// CSV `t,tv`.
pub fn write_tv_csv(path: &Path, decay: &[(f64, f64)]) -> Result<()> {
    write_csv(path, &["t", "tv"], decay.iter().map(|(t, v)| vec![*t, *v]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{PeriodicField, Term};
    use crate::model::{Model, SizeDistribution};
    use proptest::prelude::*;

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

    fn constant_1d(c: f64) -> ValidatedModel {
        ValidatedModel::new(Model::levy(&[0.0], &DMatrix::from_element(1, 1, c), vec![]).unwrap()).unwrap()
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_torus(&[0.0], &Period::unit(1)), vec![0.0]);
        assert!((project_torus(&[2.3], &Period::unit(1))[0] - 0.3).abs() < 1e-15);
        let p = Period::new(vec![1.0, 2.0]).unwrap();
        assert_eq!(project_torus(&[-0.25, 5.5], &p), vec![0.75, 1.5]);
        assert_eq!(project_torus(&[-1e-18], &Period::unit(1)), vec![0.0]);
    }

    proptest! {
        #[test]
        fn projection_is_idempotent(x in prop::collection::vec(-1e3f64..1e3, 2)) {
            let p = Period::new(vec![1.0, 0.7]).unwrap();
            let once = project_torus(&x, &p);
            prop_assert!(once.iter().zip(p.as_slice()).all(|(v, t)| *v >= 0.0 && v < t));
            prop_assert_eq!(project_torus(&once, &p), once);
        }
    }

    #[test]
    fn grid_indexing_round_trips() {
        let g = TorusGrid::new(Period::new(vec![1.0, 2.0]).unwrap(), vec![4, 3]).unwrap();
        assert_eq!(g.n_cells(), 12);
        for i in 0..g.n_cells() {
            let c = g.center(i);
            assert_eq!(g.cell_of(&c), i);
            assert!(c[0] < 1.0 && c[1] < 2.0);
        }
        assert!((g.cell_volume() - 0.25 * 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn diffusion_rates_match_formula() {
        let m = constant_1d(1.0);
        let g = TorusGrid::uniform(Period::unit(1), 4).unwrap();
        let q = grid_generator(&m, &g).unwrap();
        for r in q.rows() {
            assert_eq!(r.len(), 2);
            assert!(r.iter().all(|&(_, v)| (v - 8.0).abs() < 1e-12));
        }
        let dense = q.to_dense();
        for i in 0..4 {
            assert_eq!(dense.row(i).sum(), 0.0);
        }
    }

    #[test]
    fn pure_jump_rates() {
        let m = ValidatedModel::new(
            Model::levy(
                &[0.0],
                &DMatrix::zeros(1, 1),
                vec![(1.0, SizeDistribution::atoms(vec![(0.5, vec![1.5]), (0.5, vec![-1.5])], true))],
            )
            .unwrap(),
        )
        .unwrap();
        let g = TorusGrid::uniform(Period::unit(1), 4).unwrap();
        let q = grid_generator(&m, &g).unwrap();
        for (i, r) in q.rows().iter().enumerate() {
            assert_eq!(r, &vec![((i + 2) % 4, 1.0)]);
        }
    }

    #[test]
    fn coarse_grid_drops_small_atoms() {
        let m = ValidatedModel::new(
            Model::levy(
                &[0.0],
                &DMatrix::identity(1, 1),
                vec![(1.0, SizeDistribution::atoms(vec![(0.5, vec![0.01]), (0.5, vec![-0.01])], true))],
            )
            .unwrap(),
        )
        .unwrap();
        let g = TorusGrid::uniform(Period::unit(1), 8).unwrap();
        assert_eq!(grid_generator(&m, &g).unwrap().dropped_atoms, 16);
    }

    #[test]
    fn non_diagonal_diffusion_rejected() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0]);
        let m = ValidatedModel::new(Model::levy(&[0.0, 0.0], &c, vec![]).unwrap()).unwrap();
        let g = TorusGrid::uniform(Period::unit(2), 8).unwrap();
        assert!(matches!(grid_generator(&m, &g), Err(Error::Unsupported(_))));
    }

    #[test]
    fn ring_is_uniform() {
        let m = constant_1d(2.0);
        let g = TorusGrid::uniform(Period::unit(1), 16).unwrap();
        let q = grid_generator(&m, &g).unwrap();
        let pi = stationary_solve(&q).unwrap();
        assert!(pi.weights.iter().all(|w| (w - 1.0 / 16.0).abs() < 1e-13));
    }

    #[test]
    fn single_cell() {
        let g = TorusGrid::uniform(Period::unit(1), 1).unwrap();
        let q = RateMatrix::from_rates(g, vec![vec![]]).unwrap();
        assert_eq!(stationary_solve(&q).unwrap().weights, vec![1.0]);
    }

    #[test]
    fn reducible_rejected() {
        let g = TorusGrid::uniform(Period::unit(1), 3).unwrap();
        let q = RateMatrix::from_rates(g, vec![vec![(1, 1.0)], vec![(0, 1.0)], vec![(0, 1.0)]]).unwrap();
        assert!(matches!(stationary_solve(&q), Err(Error::Reducible)));
    }

    #[test]
    fn harmonic_density_is_inverse_diffusion() {
        let m = harmonic();
        let g = TorusGrid::uniform(Period::unit(1), 256).unwrap();
        let q = grid_generator(&m, &g).unwrap();
        let pi = stationary_solve(&q).unwrap();
        assert!(stationary_residual(&q, &pi) <= 1e-10);
        let inv: Vec<f64> = g.centers().iter().map(|x| 1.0 / (2.0 + (std::f64::consts::TAU * x[0]).sin())).collect();
        let z: f64 = inv.iter().sum();
        for (w, v) in pi.weights.iter().zip(&inv) {
            assert!((w - v / z).abs() <= 0.01 * v / z);
        }
        let (_, p) = q.uniformized();
        let row = DMatrix::from_row_slice(1, 256, &pi.weights);
        let step = &row * &p - &row;
        assert!(step.iter().map(|v| v.abs()).sum::<f64>() <= 1e-10);
    }

    #[test]
    fn power_iteration_agrees_with_dense() {
        let m = harmonic();
        let g = TorusGrid::uniform(Period::unit(1), 32).unwrap();
        let q = grid_generator(&m, &g).unwrap();
        let dense = stationary_solve(&q).unwrap();
        let power = power_stationary(&q).unwrap();
        let tv: f64 = 0.5 * dense.weights.iter().zip(&power).map(|(a, b)| (a - b).abs()).sum::<f64>();
        assert!(tv < 1e-9, "{tv}");
    }

    #[test]
    fn tv_decay_matches_spectral_gap() {
        let m = constant_1d(1.0);
        let g = TorusGrid::uniform(Period::unit(1), 32).unwrap();
        let q = grid_generator(&m, &g).unwrap();
        let pi = stationary_solve(&q).unwrap();
        let times: Vec<f64> = (1..=8).map(|k| 0.1 * k as f64).collect();
        let decay = tv_decay(&q, &pi, &times).unwrap();
        assert!(decay.windows(2).all(|w| w[1].1 <= w[0].1));
        // Oracle: second eigenvalue of the symmetric uniformized chain.
        let (lam, p) = q.uniformized();
        let ev = linalg::sorted_eigenvalues(&p);
        let second = ev[ev.len() - 2].abs().max(ev[0].abs());
        let rate = -lam * second.ln();
        let pts: Vec<(f64, f64)> = decay.iter().map(|(t, v)| (*t, v.ln())).collect();
        let fit = crate::stats::linear_fit(&pts);
        assert!((fit.slope + rate).abs() / rate < 0.02, "slope {} vs gap {}", fit.slope, rate);
        // the continuous-time gap of the discrete Laplacian, 2c/h²·(1−cos 2πh)/2
        let h = 1.0 / 32.0;
        let gap = (1.0 - (std::f64::consts::TAU * h).cos()) / (h * h);
        assert!((rate - gap).abs() / gap < 0.01);
    }

    #[test]
    fn tv_decay_edge_cases() {
        let m = constant_1d(1.0);
        let g = TorusGrid::uniform(Period::unit(1), 8).unwrap();
        let q = grid_generator(&m, &g).unwrap();
        let pi = stationary_solve(&q).unwrap();
        assert!(tv_decay(&q, &pi, &[0.0, 1.0]).is_err());
        let d = tv_decay(&q, &pi, &[0.0, 1.0, 50.0]).unwrap();
        assert!((d[0].1 - (1.0 - 1.0 / 8.0)).abs() < 1e-12);
        assert!(d[2].1 <= 1e-8);
    }
}
