//! Is `εF_{t/ε²}` close to `N(0, tΣ)`? The Gaussian test report along a sweep in ε.
//!
//!     cargo run --release --example gaussian_limit

use homog_jump::convergence::{convergence_sweep, test_gaussian};
use homog_jump::effective::sigma_from_grid;
use homog_jump::shipped;
use homog_jump::sim::scaled_samples;

fn main() -> homog_jump::Result<()> {
    let model = shipped::diagonal_2d();
    let sigma = sigma_from_grid(&model)?.0.sigma;
    println!("Σ = {sigma}");

    let sw = convergence_sweep(&model, &sigma, &[0.5, 0.25, 0.125], 1.0, 2000, 17, 0.02)?;
    for r in &sw.reports {
        println!(
            "eps {:?}: cov error {:.4} ± {:.4}, cf distance {:.4} ± {:.4}, min KS p {:.3}",
            r.eps, r.cov_error, r.cov_error_se, r.cf_distance, r.cf_se, r.min_ks_p()
        );
    }
    println!("cf nonincreasing {}, final passed {}", sw.cf_nonincreasing, sw.final_passed);

    // A wrong Σ is caught.
    let xs = scaled_samples(&model, 0.125, 1.0, 2000, 18, 0.02)?;
    let wrong = &sigma * 1.5;
    let r = test_gaussian(&xs, &wrong, 1.0)?;
    println!("against 1.5·Σ: passed {}, min KS p {:.1e}", r.passed, r.min_ks_p());
    Ok(())
}
