use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbsde_core::grid::{ScalarPath, TimeGrid};
use rbsde_core::harness::oracle_rbode_bruteforce;
use rbsde_core::rbode::{
    hitting_time_check, lipschitz_regularize, monotone_sequence, solve_backward_ode, solve_rbode, Coefficient,
    Direction, GrowthClass, Method, MonotoneSettings, RbodeProblem, TruncationPlan,
};

/// `φ(y) = a sin(b y + c) + d y` and a barrier `l_t = e₀ + e₁ sin(ω t + ψ)`
/// capped at the terminal at `T`.
fn random_lipschitz(seed: u64, n: usize) -> RbodeProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b, c, d): (f64, f64, f64, f64) = (
        rng.random_range(-1.0..1.0),
        rng.random_range(-2.0..2.0),
        rng.random_range(-3.0..3.0),
        rng.random_range(-1.0..1.0),
    );
    let (e0, e1, w, psi) = (
        rng.random_range(-1.0..1.0),
        rng.random_range(0.0..1.5),
        rng.random_range(1.0..12.0),
        rng.random_range(0.0..6.0),
    );
    let x: f64 = rng.random_range(-1.0..1.0);
    let grid = TimeGrid::uniform(1.0, n).unwrap();
    let mut barrier = ScalarPath::from_fn(&grid, |t| e0 + e1 * (w * t + psi).sin()).into_values();
    barrier[n] = barrier[n].min(x);
    let coef = Coefficient::new(
        move |y| a * (b * y + c).sin() + d * y,
        GrowthClass::Lipschitz(a.abs() * b.abs() + d.abs()),
        false,
    );
    RbodeProblem::new(grid, x, coef, ScalarPath::new(barrier)).unwrap()
}

#[test]
fn representation_and_picard_agree_on_random_lipschitz_problems() {
    for seed in 0..25 {
        let p = random_lipschitz(seed, 1000);
        let rep = solve_rbode(&p, Method::Representation).unwrap();
        let pic = solve_rbode(&p, Method::Picard).unwrap();
        let gap = rep.y.sup_distance(&pic.y);
        assert!(gap <= 1e-6, "seed {seed}: gap {gap}");
        assert!(rep.check_invariants(&p).pass, "seed {seed}");
        assert!(pic.check_invariants(&p).pass, "seed {seed}");
    }
}

#[test]
fn dp_sweep_matches_bruteforce_sup() {
    for seed in 100..110 {
        let p = random_lipschitz(seed, 60);
        let dp = solve_rbode(&p, Method::Representation).unwrap();
        let bf = solve_rbode(&p, Method::Bruteforce).unwrap();
        assert!(dp.y.sup_distance(&bf.y) <= 1e-10, "seed {seed}");
    }
}

#[test]
fn representation_dominates_every_unreflected_solve() {
    for seed in 200..220 {
        let p = random_lipschitz(seed, 50);
        let sol = solve_rbode(&p, Method::Representation).unwrap();
        let n = p.grid.last();
        for s in 0..=n {
            let start = if s == n { p.terminal } else { p.barrier[s] };
            let u = solve_backward_ode(&p.coefficient, start, &p.grid, 0..=s).unwrap();
            for t in 0..=s {
                assert!(sol.y[t] >= u.at(t) - sol.tol, "seed {seed}, t {t}, s {s}");
            }
        }
    }
}

#[test]
fn hitting_time_representation_holds_for_monotone_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let (a, c) = (rng.random_range(0.1..1.5), rng.random_range(-1.0..1.0));
        let p0 = random_lipschitz(rng.random(), 200);
        let coef = Coefficient::new(move |y| a * y.tanh() + c, GrowthClass::Lipschitz(a), true);
        let p = p0.with_coefficient(coef);
        let sol = solve_rbode(&p, Method::Representation).unwrap();
        for t in [0, 37, 100, 199, 200] {
            let h = hitting_time_check(&sol, &p, t).unwrap();
            assert!(h.index >= t);
            assert!(h.defect <= sol.tol, "t {t}: defect {}", h.defect);
        }
    }
}

/// `φ(y) = y/2`, `l(s) = (2 − (s − 1/3)²) e^{−s/2}`, `x = 1`: `u_t^s =
/// l(s) e^{(s−t)/2}`, so `y_t = e^{−t/2} max(max_{s≥t} g(s), e^{1/2})` with
/// `g(s) = 2 − (s − 1/3)²`.
fn smooth_peak(n: usize) -> (RbodeProblem, impl Fn(f64) -> f64) {
    let grid = TimeGrid::uniform(1.0, n).unwrap();
    let l = ScalarPath::from_fn(&grid, |s| (2.0 - (s - 1.0 / 3.0).powi(2)) * (-s / 2.0).exp());
    let coef = Coefficient::new(|y| 0.5 * y, GrowthClass::Lipschitz(0.5), true);
    let exact = |t: f64| {
        let g = |s: f64| 2.0 - (s - 1.0 / 3.0).powi(2);
        let best = if t <= 1.0 / 3.0 { 2.0 } else { g(t) };
        (-t / 2.0).exp() * best.max(0.5f64.exp())
    };
    (RbodeProblem::new(grid, 1.0, coef, l).unwrap(), exact)
}

#[test]
fn refinement_changes_shrink_and_converge_to_closed_form() {
    let coarse = 25;
    let mut prev: Option<ScalarPath> = None;
    let mut changes = Vec::new();
    for k in 0..4 {
        let n = coarse << k;
        let (p, exact) = smooth_peak(n);
        let sol = solve_rbode(&p, Method::Representation).unwrap();
        let on_coarse = sol.y.restrict(1 << k);
        let err = p
            .grid
            .points()
            .iter()
            .zip(sol.y.values())
            .fold(0.0f64, |m, (&t, &y)| m.max((y - exact(t)).abs()));
        assert!(err <= 2.0 * (1.0 / (3.0 * n as f64)).powi(2) + 1e-9, "n {n}: err {err}");
        if let Some(prev) = &prev {
            changes.push(prev.sup_distance(&on_coarse));
        }
        prev = Some(on_coarse);
    }
    for w in changes.windows(2) {
        assert!(w[0] >= 1.5 * w[1], "changes {changes:?}");
    }
}

#[test]
fn bruteforce_oracle_self_refinement() {
    let (p, _) = smooth_peak(20);
    let f2 = oracle_rbode_bruteforce(&p, 2).unwrap();
    let f4 = oracle_rbode_bruteforce(&p, 4).unwrap();
    let f8 = oracle_rbode_bruteforce(&p, 8).unwrap();
    let (g1, g2) = (f2.y.sup_distance(&f4.y), f4.y.sup_distance(&f8.y));
    assert!(g2 <= g1, "{g1} then {g2}");
    let rep = solve_rbode(&p, Method::Representation).unwrap();
    assert!(rep.y.sup_distance(&f8.y) <= 5e-3);
}

#[test]
fn tent_barrier_bruteforce_at_every_refinement() {
    let grid = TimeGrid::uniform(1.0, 50).unwrap();
    let l = ScalarPath::from_fn(&grid, |t| (1.0 - (t - 0.5).abs() / 0.1).max(0.0));
    let p = RbodeProblem::new(grid, 0.0, Coefficient::zero(), l.clone()).unwrap();
    for factor in [2, 4, 8] {
        let s = oracle_rbode_bruteforce(&p, factor).unwrap();
        assert!((s.y[0] - 1.0).abs() < 1e-12);
        for i in 25..=30 {
            assert!((s.y[i] - l[i]).abs() < 1e-12);
        }
    }
}

#[test]
fn case_a_closed_form_contradicts_dynamics() {
    // closed form max{x + ∫φ, l_t} with φ ≡ 0, x = 0 on the tent barrier
    let grid = TimeGrid::uniform(1.0, 100).unwrap();
    let l = ScalarPath::from_fn(&grid, |t| (1.0 - (t - 0.5).abs() / 0.1).max(0.0));
    let closed_form_y0 = 0.0f64.max(l[0]);
    let p = RbodeProblem::new(grid, 0.0, Coefficient::zero(), l).unwrap();
    let y0 = solve_rbode(&p, Method::Representation).unwrap().y[0];
    assert_eq!(closed_form_y0, 0.0);
    assert_eq!(y0, 1.0);
}

fn ordered_problem(class: &str, seed: u64, shifts: (f64, f64, f64)) -> (RbodeProblem, RbodeProblem, Method) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 100;
    let grid = TimeGrid::uniform(1.0, n).unwrap();
    let (dx, dphi, dl) = shifts;
    let (a, b): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let (e0, e1, w) = (
        rng.random_range(0.5..1.5),
        rng.random_range(0.0..0.4),
        rng.random_range(1.0..10.0),
    );
    let x2: f64 = rng.random_range(0.5..2.5);
    let make = |shift_phi: f64, x: f64, shift_l: f64| -> RbodeProblem {
        let coef = match class {
            "lipschitz" => Coefficient::new(
                move |y| a * y.sin() + b * y + shift_phi,
                GrowthClass::Lipschitz(a.abs() + b.abs()),
                false,
            ),
            "linear" => Coefficient::new(
                move |y| a * y * y.cos() + b + shift_phi,
                GrowthClass::Linear(a.abs() + b.abs() + shift_phi.abs()),
                false,
            ),
            _ => Coefficient::new(
                move |y: f64| a.abs() * y.abs() * (1.0 + y.abs()).ln() + b + shift_phi,
                GrowthClass::Superlinear(Arc::new(|y: f64| 3.0 + (1.0 + y.abs()) * (1.0 + y.abs()).ln())),
                false,
            ),
        };
        let mut barrier = ScalarPath::from_fn(&grid, |t| e0 + e1 * (w * t).sin() + shift_l).into_values();
        barrier[n] = barrier[n].min(x);
        RbodeProblem::new(grid.clone(), x, coef, ScalarPath::new(barrier)).unwrap()
    };
    let low = make(0.0, x2, 0.0);
    let high = make(dphi, x2 + dx, dl);
    let method = if class == "superlinear" {
        Method::Superlinear
    } else {
        Method::Representation
    };
    (high, low, method)
}

fn comparison_holds(class: &str, seed: u64, shifts: (f64, f64, f64)) {
    let (high, low, method) = ordered_problem(class, seed, shifts);
    let y1 = solve_rbode(&high, method).unwrap();
    let y2 = solve_rbode(&low, method).unwrap();
    let tol = y1.tol.max(y2.tol);
    for (i, (a, b)) in y1.y.values().iter().zip(y2.y.values()).enumerate() {
        assert!(a >= &(b - tol), "{class} seed {seed} index {i}: {a} < {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn comparison_lipschitz(seed in any::<u64>(), dx in 0.0..0.5f64, dphi in 0.0..0.5f64, dl in 0.0..0.5f64) {
        comparison_holds("lipschitz", seed, (dx, dphi, dl));
    }

    #[test]
    fn comparison_linear(seed in any::<u64>(), dx in 0.0..0.5f64, dphi in 0.0..0.5f64, dl in 0.0..0.5f64) {
        comparison_holds("linear", seed, (dx, dphi, dl));
    }

    #[test]
    fn comparison_superlinear(seed in any::<u64>(), dx in 0.0..0.5f64, dphi in 0.0..0.5f64, dl in 0.0..0.5f64) {
        comparison_holds("superlinear", seed, (dx, dphi, dl));
    }

    #[test]
    fn eps_shift_is_monotone(seed in any::<u64>(), eps in prop::collection::vec(0.0..1.0f64, 2..6)) {
        let p = random_lipschitz(seed, 100);
        let coef = p.coefficient.clone();
        let mut eps = eps;
        eps.sort_by(|a, b| b.total_cmp(a));
        let solves: Vec<_> = eps
            .iter()
            .map(|e| solve_backward_ode(&coef, p.terminal - e, &p.grid, 0..=100).unwrap())
            .collect();
        for w in solves.windows(2) {
            for (a, b) in w[0].values.iter().zip(&w[1].values) {
                prop_assert!(b >= &(a - 1e-12));
            }
        }
    }

    #[test]
    fn superlinear_solutions_are_confined(seed in any::<u64>()) {
        let (_, p, _) = ordered_problem("superlinear", seed, (0.0, 0.0, 0.0));
        let l0 = match p.coefficient.growth() {
            GrowthClass::Superlinear(l0) => Arc::clone(l0),
            _ => unreachable!(),
        };
        let plan = TruncationPlan::build(&p, &l0).unwrap();
        let sol = solve_rbode(&p, Method::Superlinear).unwrap();
        for (i, &y) in sol.y.values().iter().enumerate() {
            prop_assert!(y >= plan.m_lower - sol.tol && y <= plan.envelope[i] + sol.tol);
            prop_assert_eq!(p.coefficient.eval(plan.rho(y)), p.coefficient.eval(y));
        }
        prop_assert!(sol.check_invariants(&p).pass);
    }
}

#[test]
fn inf_convolution_family_properties() {
    let phi = Coefficient::new(|y| y * y.cos() + 0.5, GrowthClass::Linear(1.5), false);
    let (m, delta) = (8.0, 2e-3);
    let ns = [2.0, 4.0, 8.0, 16.0];
    let regs: Vec<Coefficient> = ns
        .iter()
        .map(|&n| lipschitz_regularize(&phi, n, Direction::Inf, m, delta).unwrap())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let y: f64 = rng.random_range(-3.0..3.0);
        let y2: f64 = rng.random_range(-3.0..3.0);
        for (k, (reg, &n)) in regs.iter().zip(&ns).enumerate() {
            assert!(reg.eval(y).abs() <= 1.5 * (1.0 + y.abs()) + 1e-9);
            assert!((reg.eval(y) - reg.eval(y2)).abs() <= n * (y - y2).abs() + 1e-9);
            if k > 0 {
                assert!(reg.eval(y) >= regs[k - 1].eval(y) - 1e-12);
            }
        }
    }
}

#[test]
fn monotone_min_sequence_increases_in_n() {
    let grid = TimeGrid::uniform(1.0, 64).unwrap();
    let coef = Coefficient::new(|y| y * y.cos() + 0.5, GrowthClass::Linear(1.5), false);
    let l = ScalarPath::from_fn(&grid, |t| 0.3 * (5.0 * t).sin());
    let p = RbodeProblem::new(grid, 0.5, coef, l).unwrap();
    let settings = MonotoneSettings::default_for(&p).unwrap();
    let seq = monotone_sequence(&p, Direction::Inf, &settings).unwrap();
    assert!(seq.len() >= 2);
    for w in seq.windows(2) {
        for (a, b) in w[0].y.values().iter().zip(w[1].y.values()) {
            assert!(b >= &(a - w[1].tol));
        }
    }
}
