//! Simulate a few paths of the periodic jump model and look at the diffusive scaling
//! `εF_{t/ε²}` directly.
//!
//!     cargo run --release --example simulate_paths

use homog_jump::shipped;
use homog_jump::sim::{scaled_samples, scaling_identity_defect, simulate_paths, write_paths_csv, SimConfig};
use homog_jump::stats::covariance;

fn main() -> homog_jump::Result<()> {
    let model = shipped::jump_periodic_1d();

    let cfg = SimConfig::new(0.01, 2.0, 3, 7);
    let paths = simulate_paths(&model, &[0.0], &cfg)?;
    for p in &paths {
        println!("stream {}: {} grid points, {} jumps, F_T = {:.4}", p.stream, p.times.len(), p.jump_marks.len(), p.states.last().unwrap()[0]);
    }
    let mut csv = Vec::new();
    write_paths_csv(&paths[..1], &mut csv)?;
    let text = String::from_utf8_lossy(&csv);
    println!("first rows of the CSV:");
    for line in text.lines().take(4) {
        println!("  {line}");
    }

    // Same random stream, two constructions of εF_{t/ε²}: they must agree pathwise.
    // Jump times are not matched between the two, so use a pure diffusion here.
    let defect = scaling_identity_defect(&shipped::diagonal_2d(), 0.25, 1.0, 11, 0.05)?;
    println!("scaling identity defect {defect:.2e}");

    // The spread of εF_{t/ε²} settles as ε shrinks.
    for eps in [0.5, 0.25, 0.125] {
        let xs = scaled_samples(&model, eps, 1.0, 4000, 3, 0.02)?;
        let c = covariance(&xs)?;
        println!("eps {eps:<6} var {:.4} ± {:.4}", c.cov[(0, 0)], c.se[(0, 0)]);
    }
    Ok(())
}
