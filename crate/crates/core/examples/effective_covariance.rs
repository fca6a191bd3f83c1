//! Effective covariance for constant coefficients, where it is closed form, and for
//! the shipped periodic models.
//!
//!     cargo run --release --example effective_covariance

use nalgebra::DMatrix;

use homog_jump::effective::{sigma_effective, sigma_from_grid, sigma_levy};
use homog_jump::torus::{occupation_invariant, OccupationConfig, TorusGrid};
use homog_jump::{shipped, Model, SizeDistribution};

fn main() -> homog_jump::Result<()> {
    // Lévy: c = I plus ±e₁ jumps at rate 1 adds e₁e₁ᵀ.
    let sizes = SizeDistribution::atoms(vec![(0.5, vec![1.0, 0.0]), (0.5, vec![-1.0, 0.0])], true);
    let levy = Model::levy(&[0.0, 0.0], &DMatrix::identity(2, 2), vec![(1.0, sizes)])?;
    let (bbar, s) = sigma_levy(&[0.0, 0.0], &DMatrix::identity(2, 2), levy.jumps())?;
    println!("levy: b̄ = {:?}, Σ = {}", bbar.as_slice(), s.sigma);

    // c = 2 + sin 2πx: Σ is the harmonic mean of c, which is √3.
    let m = shipped::harmonic_1d();
    let (s, pi) = sigma_from_grid(&m)?;
    println!("harmonic_1d grid:       Σ = {:.10} (√3 = {:.10})", s.sigma[(0, 0)], 3f64.sqrt());
    let grid = TorusGrid::uniform(m.period().clone(), 64)?;
    let occ = occupation_invariant(&m, &grid, &OccupationConfig::new(5e3, 0.005, 2))?;
    println!("harmonic_1d occupation: Σ = {:.6}", sigma_effective(&m, &occ)?.sigma[(0, 0)]);
    println!("  π from {:?}", pi.provenance);

    let j = shipped::jump_periodic_1d();
    let (s, _) = sigma_from_grid(&j)?;
    println!("jump_periodic_1d: Σ = {:.6}", s.sigma[(0, 0)]);

    let d = shipped::diagonal_2d();
    println!("diagonal_2d: Σ = {}", sigma_from_grid(&d)?.0.sigma);
    Ok(())
}
