//! The invariant measure of the process projected onto the torus: a finite-volume
//! stationary solve against long-run occupation, plus the decay of TV distance.
//!
//!     cargo run --release --example invariant_measure

use homog_jump::shipped;
use homog_jump::stats::linear_fit;
use homog_jump::torus::{grid_generator, occupation_invariant, stationary_residual, stationary_solve, tv_decay, OccupationConfig, TorusGrid};

fn main() -> homog_jump::Result<()> {
    let model = shipped::harmonic_1d();
    let grid = TorusGrid::uniform(model.period().clone(), 64)?;

    let q = grid_generator(&model, &grid)?;
    let pi = stationary_solve(&q)?;
    println!("grid solve: {} cells, residual {:.1e}", q.n(), stationary_residual(&q, &pi));

    // π ∝ 1/c for a pure diffusion in divergence-free form; peek at two cells.
    let lo = pi.weights.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = pi.weights.iter().cloned().fold(0.0, f64::max);
    println!("weights range [{lo:.5}, {hi:.5}], ratio {:.3} (c ranges over [1, 3])", hi / lo);

    let occ = occupation_invariant(&model, &grid, &OccupationConfig::new(5e3, 0.005, 1))?;
    println!("occupation vs grid TV {:.4}", occ.tv(&pi)?);

    let times: Vec<f64> = (1..=10).map(|k| 0.02 * k as f64).collect();
    let decay = tv_decay(&q, &pi, &times)?;
    let fit = linear_fit(&decay.iter().map(|(t, v)| (*t, v.ln())).collect::<Vec<_>>());
    for (t, v) in &decay {
        println!("  t {t:.2}  TV {v:.3e}");
    }
    println!("log TV slope {:.2} (R² {:.4})", fit.slope, fit.r2);
    Ok(())
}
