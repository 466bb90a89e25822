//! Analytic Lagrangian partials against central finite differences and a
//! scalar-loop re-evaluation of the Lagrangian itself.

mod common;

use common::Fixture;
use iscap::config::SystemConfig;
use iscap::eg::VariationalMap;
use iscap::oracle::{fd_gradient, lagrangian_by_loops, relative_error, FdSpec};
use iscap::rsma::Mode;

fn small_cfg() -> SystemConfig {
    SystemConfig { power_budget: Some(4.0), ..SystemConfig::default() }
}

#[test]
fn lagrangian_matches_scalar_loops() {
    let cfg = SystemConfig::default();
    for seed in 0..20 {
        let fx = Fixture::new(&cfg, seed, Mode::Rsma);
        let x = fx.random_point(seed);
        let fast = fx.ctx.lagrangian_value(&x);
        let slow = lagrangian_by_loops(&fx.inputs(), &x);
        assert!(relative_error(fast, slow, 1.0) < 1e-11, "seed {seed}: {fast} vs {slow}");
    }
}

#[test]
fn every_partial_matches_central_differences() {
    let cfg = small_cfg();
    let spec = FdSpec::default();
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let fx = Fixture::new(&cfg, 100 + seed, Mode::Rsma);
        let lay = fx.layout();
        let x = fx.random_point(seed);
        let fd = fd_gradient(|y| lagrangian_by_loops(&fx.inputs(), y), &x, &spec).unwrap();
        let h = fx.ctx.vi_map(&x);
        // h = [−∂L/∂y, ∂L/∂z]
        let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..lay.dim() {
            let analytic = if i < lay.dual_start() { -h[i] } else { h[i] };
            let err = relative_error(analytic, fd[i], 1e-3 * scale);
            worst = worst.max(err);
            assert!(err < spec.rel_tol, "seed {seed} coord {i}: analytic {analytic} fd {}", fd[i]);
        }
    }
    assert!(worst < FdSpec::default().rel_tol);
}

#[test]
fn wirtinger_gradient_is_half_the_real_gradient() {
    let cfg = small_cfg();
    let fx = Fixture::new(&cfg, 7, Mode::Rsma);
    let lay = fx.layout();
    let x = fx.random_point(3);
    let fd = fd_gradient(|y| fx.ctx.lagrangian_value(y), &x, &FdSpec::default()).unwrap();
    for i in 0..=lay.n_users {
        let g = fx.ctx.grad_p(&x, i);
        let (re, im) = lay.column(i);
        for t in 0..lay.n_tx {
            assert!((2.0 * g[t].re - fd[re + t]).abs() < 1e-5 * fd[re + t].abs().max(1.0));
            assert!((2.0 * g[t].im - fd[im + t]).abs() < 1e-5 * fd[im + t].abs().max(1.0));
        }
    }
}

#[test]
fn scalar_partials_at_known_points() {
    let cfg = small_cfg();
    let fx = Fixture::new(&cfg, 11, Mode::Rsma);
    let lay = fx.layout();
    let mut x = fx.random_point(5);
    // all multipliers zero leaves r plus the sensing term
    x[lay.dual_start()..].fill(0.0);
    let expected = x[lay.r()] + fx.tradeoff * fx.ctx.sensing_term(&x);
    assert!((fx.ctx.lagrangian_value(&x) - expected).abs() < 1e-12);
    // β = 1/K cancels ∂L/∂r
    x[lay.beta()..lay.rho()].fill(1.0 / lay.n_users as f64);
    assert!(fx.ctx.grad_scalars(&x).dr.abs() < 1e-15);
}

#[test]
fn sdma_masks_common_coordinates() {
    let cfg = small_cfg();
    let fx = Fixture::new(&cfg, 13, Mode::Sdma);
    let lay = fx.layout();
    let x = fx.random_point(1);
    let mut h = vec![0.0; lay.dim()];
    fx.ctx.eval(&x, &mut h);
    assert!(h[..2 * lay.n_tx].iter().all(|v| *v == 0.0));
    assert!(h[lay.c()..lay.r()].iter().all(|v| *v == 0.0));
    assert!(h[lay.rho()..lay.omega()].iter().all(|v| *v == 0.0));
    assert!(h[lay.beta()..lay.rho()].iter().any(|v| *v != 0.0));
}

#[test]
fn projection_clips_only_multipliers() {
    let cfg = small_cfg();
    let fx = Fixture::new(&cfg, 17, Mode::Rsma);
    let lay = fx.layout();
    let mut x: Vec<f64> = (0..lay.dim()).map(|i| if i % 2 == 0 { -1.0 } else { 0.5 }).collect();
    let before = x.clone();
    fx.ctx.project(&mut x);
    for i in 0..lay.dim() {
        if i < lay.dual_start() {
            assert_eq!(x[i], before[i]);
        } else {
            assert_eq!(x[i], before[i].max(0.0));
        }
    }
}
