use std::f64::consts::E;

use rbsde_core::bounds::{a_priori_bound, build_h_linear, linear_theta_log, solve_theta, ThetaFamily, THETA_MAX_MESH};
use rbsde_core::grid::{ScalarPath, TimeGrid};

/// Independent oracle: `w = ln θ` solves `w' = −(αγ + β w)` backward; midpoint
/// rule with Richardson extrapolation over step halving.
fn oracle_log_theta0(alpha: f64, beta: f64, gamma: f64, x: f64, steps: usize) -> f64 {
    let run = |n: usize| {
        let h = 1.0 / n as f64;
        let mut w = gamma * x;
        for _ in 0..n {
            let mid = w + 0.5 * h * (alpha * gamma + beta * w);
            w += h * (alpha * gamma + beta * mid);
        }
        w
    };
    let (a, b) = (run(steps), run(2 * steps));
    b + (b - a) / 3.0
}

#[test]
fn oracle_agrees_with_closed_form() {
    for x in [0.0, 0.5, 1.0] {
        let o = oracle_log_theta0(1.0, 1.0, 1.0, x, 4096);
        assert!((o - linear_theta_log(1.0, 1.0, 1.0, x, 1.0)).abs() < 1e-10);
    }
    assert!((linear_theta_log(1.0, 1.0, 1.0, 1.0, 1.0) - (2.0 * E - 1.0)).abs() < 1e-15);
}

#[test]
fn log_theta0_matches_frozen_values() {
    // frozen from the oracle above
    let expected = [
        (0.0, 1.718_281_828_459_045),
        (0.5, 3.077_422_742_688_567_6),
        (1.0, 4.436_563_656_918_09),
    ];
    let g = TimeGrid::uniform(1.0, 1000).unwrap();
    let h = build_h_linear(1.0, 1.0, 1.0, true).unwrap();
    let a = ScalarPath::constant(&g, 0.0);
    for (x, want) in expected {
        let s = solve_theta(x, &h, &a, &g).unwrap();
        s.check().unwrap();
        let got = s.theta.first().ln();
        assert!((got - want).abs() <= 1e-6 * want.abs(), "x = {x}: {got} vs {want}");
    }
}

#[test]
fn two_point_bound() {
    let g = TimeGrid::uniform(1.0, 100).unwrap();
    let h = build_h_linear(1.0, 1.0, 1.0, true).unwrap();
    let a = ScalarPath::constant(&g, 0.0);
    let fam = ThetaFamily::solve(&[0.0, 1.0], &h, &a, &g, THETA_MAX_MESH).unwrap();
    let b = a_priori_bound(&fam, &[(0.5, 0.0), (0.5, 1.0)], 0.0, 0).unwrap();
    let want = (0.5 * ((2.0 * E - 1.0).exp() + (E - 1.0).exp())).ln();
    assert!((b - want).abs() < 1e-7, "{b} vs {want}");
    assert!((b - 3.807).abs() < 1e-3);
}

#[test]
fn gaussian_integrability_against_analytic_value() {
    use statrs::distribution::{ContinuousCDF, Normal};
    let normal = Normal::standard();
    // E e^{|ξ|} = 2 e^{1/2} Φ(1) for standard normal ξ
    let exact = 2.0 * 0.5f64.exp() * normal.cdf(1.0);
    assert!((exact - 2.774_3).abs() < 1e-4);
    let n = 100_000;
    let samples: Vec<(f64, f64)> = (0..n)
        .map(|k| (1.0 / n as f64, normal.inverse_cdf((k as f64 + 0.5) / n as f64)))
        .collect();
    let est = rbsde_core::bounds::integrability_check(&samples, 1.0, 0.0, 1.0, false);
    assert!((est - exact).abs() <= 0.02 * exact, "{est} vs {exact}");
}
