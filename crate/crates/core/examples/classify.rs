//! Long-time behaviour of the limiting Brownian motion from Σ alone.
//!
//!     cargo run --example classify

use nalgebra::DMatrix;

use homog_jump::convergence::classify_longtime;

fn main() -> homog_jump::Result<()> {
    for d in 1..=3 {
        let s = DMatrix::identity(d, d) * 2.0;
        let v = classify_longtime(d, &s)?;
        println!("d = {d}: {:?}, ergodic on ℝ^d {}", v.classification, v.ergodic);
    }
    let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
    match classify_longtime(2, &singular) {
        Err(e) => println!("rank-one Σ: {e}"),
        Ok(v) => println!("unexpected: {v:?}"),
    }
    Ok(())
}
