//! Exit times from a ball and a Dirichlet problem solved by Monte Carlo, for the
//! rescaled model and for its Brownian limit.
//!
//!     cargo run --release --example exit_times

use nalgebra::DMatrix;

use homog_jump::effective::sigma_from_grid;
use homog_jump::exit::{dirichlet_mc, exit_samples, max_overshoot, DirichletProblem, Domain, ExitConfig, ExitProcess, ScalarFn};
use homog_jump::shipped;
use homog_jump::stats::ks_two_sample;

fn main() -> homog_jump::Result<()> {
    // Standard planar Brownian motion: E τ = (1 − |x|²)/2 from Ball(0,1).
    let ball = Domain::unit_ball(2);
    let bm = ExitProcess::brownian(&DMatrix::identity(2, 2))?;
    let run = exit_samples(&bm, &ball, &[0.0, 0.0], &ExitConfig::new(2000, 1e-4, 1))?;
    let (m, se) = run.mean_time();
    println!("BM from 0: E τ = {m:.4} ± {se:.4} (exact 0.5), censored {}", run.censored);

    let model = shipped::diagonal_2d();
    let sigma = sigma_from_grid(&model)?.0.sigma;
    let cfg = ExitConfig::new(2000, 1e-4, 2);
    let limit = exit_samples(&ExitProcess::brownian(&sigma)?, &ball, &[0.0, 0.0], &cfg)?;
    let scaled = exit_samples(&ExitProcess::scaled(model.clone(), 0.125)?, &ball, &[0.0, 0.0], &cfg)?;
    let ks = ks_two_sample(&scaled.times(), &limit.times());
    println!("diagonal_2d eps 0.125: E τ {:.4} vs limit {:.4}, KS p {:.3}", scaled.mean_time().0, limit.mean_time().0, ks.p_value);

    // Jumps leave the domain by a positive distance.
    let jumps = shipped::jump_periodic_1d();
    let run = exit_samples(&ExitProcess::scaled(jumps, 0.25)?, &Domain::unit_ball(1), &[0.0], &ExitConfig::new(2000, 1e-4, 3))?;
    println!("jump_periodic_1d eps 0.25: largest overshoot {:.3}", max_overshoot(&run));

    // ½Σ:∇²u = −1 in the ball, u = 0 on the boundary, on an annulus as well.
    let problem = |domain| DirichletProblem { domain, a: ScalarFn::Constant(0.0), f: ScalarFn::Constant(-1.0), g: ScalarFn::Constant(0.0) };
    let points = vec![vec![0.0, 0.0], vec![0.5, 0.0]];
    for v in dirichlet_mc(&problem(ball.clone()), &ExitProcess::brownian(&sigma)?, &points, &cfg)? {
        println!("u{:?} = {:.4} ± {:.4}", v.point, v.value, v.se);
    }
    let ring = Domain::annulus(vec![0.0, 0.0], 0.25, 1.0)?;
    let g = ScalarFn::parse("x1 * x1", 2)?;
    let p = DirichletProblem { domain: ring, a: ScalarFn::Constant(0.0), f: ScalarFn::Constant(0.0), g };
    let v = dirichlet_mc(&p, &ExitProcess::brownian(&sigma)?, &[vec![0.5, 0.0]], &cfg)?;
    println!("annulus, harmonic with g = x1²: u(0.5, 0) = {:.4} ± {:.4}", v[0].value, v[0].se);
    Ok(())
}
