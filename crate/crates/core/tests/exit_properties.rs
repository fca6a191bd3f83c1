use nalgebra::DMatrix;

use homog_jump::effective::sigma_from_grid;
use homog_jump::exit::{exit_samples, Domain, ExitConfig, ExitProcess};
use homog_jump::rng::derive_seed;
use homog_jump::shipped;
use homog_jump::stats::ks_two_sample;

fn bm(d: usize) -> ExitProcess {
    ExitProcess::brownian(&DMatrix::identity(d, d)).unwrap()
}

#[test]
fn brownian_scaling_of_mean_exit_time() {
    let cfg = ExitConfig::new(4000, 1e-4, 21);
    let small = exit_samples(&bm(2), &Domain::unit_ball(2), &[0.0, 0.0], &cfg).unwrap();
    let big = exit_samples(&bm(2), &Domain::ball(vec![0.0, 0.0], 2.0).unwrap(), &[0.0, 0.0], &ExitConfig { seed: 22, ..cfg }).unwrap();
    let (m1, s1) = small.mean_time();
    let (m2, s2) = big.mean_time();
    let (m2, s2) = (m2 / 4.0, s2 / 4.0);
    assert!((m2 - m1).abs() <= 3.0 * (s1 * s1 + s2 * s2).sqrt(), "{m1} ± {s1} vs {m2} ± {s2}");
}

#[test]
fn independent_seeds_agree() {
    let domain = Domain::unit_ball(1);
    let mut passes = 0;
    for k in 0..100 {
        let a = exit_samples(&bm(1), &domain, &[0.0], &ExitConfig::new(300, 4e-3, derive_seed(5, 2 * k))).unwrap();
        let b = exit_samples(&bm(1), &domain, &[0.0], &ExitConfig::new(300, 4e-3, derive_seed(5, 2 * k + 1))).unwrap();
        if ks_two_sample(&a.times(), &b.times()).p_value > 0.01 {
            passes += 1;
        }
    }
    assert!(passes >= 95, "{passes}/100");
}

#[test]
fn halving_dt_leaves_exit_times_stable() {
    let domain = Domain::unit_ball(2);
    let a = exit_samples(&bm(2), &domain, &[0.0, 0.0], &ExitConfig::new(4000, 1e-4, 31)).unwrap();
    let b = exit_samples(&bm(2), &domain, &[0.0, 0.0], &ExitConfig::new(4000, 5e-5, 32)).unwrap();
    let ((ma, sa), (mb, sb)) = (a.mean_time(), b.mean_time());
    assert!((ma - mb).abs() <= 3.0 * (sa * sa + sb * sb).sqrt(), "{ma} ± {sa} vs {mb} ± {sb}");
    assert!(ks_two_sample(&a.times(), &b.times()).p_value > 0.01);
    for run in [&a, &b] {
        assert_eq!(run.censored, 0);
        assert!(run.times().iter().all(|t| *t >= 0.0));
    }
}

fn jump_gap(eps: f64, n: usize, dt: f64, seed: u64) -> (f64, f64, f64) {
    let model = shipped::jump_periodic_1d();
    let sigma = sigma_from_grid(&model).unwrap().0.sigma;
    let domain = Domain::unit_ball(1);
    let limit = exit_samples(&ExitProcess::brownian(&sigma).unwrap(), &domain, &[0.0], &ExitConfig::new(n, dt, seed)).unwrap();
    let scaled = exit_samples(&ExitProcess::scaled(model, eps).unwrap(), &domain, &[0.0], &ExitConfig::new(n, dt, seed + 1)).unwrap();
    let ((ms, ss), (ml, sl)) = (scaled.mean_time(), limit.mean_time());
    let p = ks_two_sample(&scaled.times(), &limit.times()).p_value;
    (ms - ml, (ss * ss + sl * sl).sqrt(), p)
}

// Jumps of size up to 2.5ε overshoot the boundary, so the scaled exit time carries an
// O(ε) excess over the Brownian one. The excess must shrink along the sweep.
#[test]
fn jump_model_exit_gap_shrinks_with_eps() {
    let gaps: Vec<(f64, f64, f64)> = [0.5, 0.25, 0.125].iter().map(|&e| jump_gap(e, 4000, 2e-4, 40)).collect();
    for w in gaps.windows(2) {
        assert!(w[1].0 < w[0].0, "{gaps:?}");
    }
    assert!(gaps[0].0 > 3.0 * gaps[0].1, "the excess at eps = 0.5 should be resolved: {gaps:?}");
}

// At n = 10⁴ the O(ε) excess is still resolved at ε = 0.125, so this comparison
// rejects; kept to record the finite-ε behaviour rather than as a gate.
#[test]
#[ignore = "jump overshoot at eps = 0.125 is detectable at n = 1e4"]
fn jump_model_matches_brownian_at_eps_eighth() {
    let (gap, se, p) = jump_gap(0.125, 10_000, 1e-4, 50);
    assert!(p > 0.01, "gap {gap} ± {se}, KS p {p}");
}
