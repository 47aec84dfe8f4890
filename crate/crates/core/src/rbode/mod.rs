//! Deterministic reflected backward ODE engine.
//!
//! Solves `y_t = x + ∫_t^T φ(y_s) ds + k_T − k_t` with `y ≥ l` and the
//! Skorokhod condition `∫ (y − l) dk = 0` on a [`TimeGrid`]. The reference
//! method is the representation `y_t = sup_{t ≤ s ≤ T} u_t^s`, where `u^s`
//! solves the unreflected ODE backward from `l_s` (or `x` when `s = T`);
//! Picard iteration, monotone inf/sup-convolution approximation and the
//! superlinear truncation are alternative routes for their growth classes.

mod coefficient;
mod ode;
mod regularize;
mod truncation;

use std::sync::Arc;

use rayon::prelude::*;

use thiserror::Error;

pub use coefficient::{Coefficient, GrowthClass, ScalarFn};
pub use ode::{defect_tol, flow_step, solve_backward_ode, BackwardSolution, DEFECT_REL};
pub use regularize::{lipschitz_regularize, Direction};
pub use truncation::{growth_envelope, TruncationPlan};

use crate::grid::{GridError, ScalarPath, TimeGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RbodeError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("non-finite value during integration at t = {time}")]
    Overflow { time: f64 },
    #[error("integration defect {defect:e} above tolerance {tol:e} after mesh halving")]
    Accuracy { defect: f64, tol: f64 },
    #[error("Picard iteration diverges: sup-norm change {change:e} grew at iteration {iteration}")]
    Divergence { iteration: usize, change: f64 },
    #[error("Picard iteration did not converge in {iterations} iterations (last change {change:e})")]
    NotConverged { iterations: usize, change: f64 },
    #[error("regime error: {0}")]
    Regime(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("method {method} requires a {required} coefficient, got {actual}")]
    WrongGrowthClass {
        method: &'static str,
        required: &'static str,
        actual: &'static str,
    },
    #[error("{class} growth certificate violated at y = {y}")]
    GrowthViolation { class: &'static str, y: f64 },
    #[error("coefficient flagged monotone but decreases between {lo} and {hi}")]
    MonotoneViolation { lo: f64, hi: f64 },
    #[error("regularization minimizer at the box edge ({minimizer}) for y = {y}; enlarge the search box")]
    BoxTooSmall { y: f64, minimizer: f64 },
    #[error("growth envelope blows up at t = {time}")]
    EnvelopeBlowup { time: f64 },
    #[error("superlinear solution leaves [{lower}, {upper}] at index {index}: y = {y}")]
    Confinement {
        index: usize,
        y: f64,
        lower: f64,
        upper: f64,
    },
    #[error("hitting-time check needs a monotone coefficient")]
    NotMonotone,
}

/// Data `(x, φ, l)` of a reflected backward ODE on a grid.
#[derive(Debug, Clone)]
pub struct RbodeProblem {
    pub grid: TimeGrid,
    pub terminal: f64,
    pub coefficient: Coefficient,
    pub barrier: ScalarPath,
}

impl RbodeProblem {
    /// Rejects `l_T > x`; `l_T = x` is accepted.
    pub fn new(
        grid: TimeGrid,
        terminal: f64,
        coefficient: Coefficient,
        barrier: ScalarPath,
    ) -> Result<Self, RbodeError> {
        barrier.check_against(&grid)?;
        if !terminal.is_finite() || barrier.values().iter().any(|v| !v.is_finite()) {
            return Err(RbodeError::InvalidProblem("non-finite data".into()));
        }
        if barrier.last() > terminal {
            return Err(RbodeError::InvalidProblem(format!(
                "barrier above terminal: l_T = {} > x = {terminal}",
                barrier.last()
            )));
        }
        Ok(Self {
            grid,
            terminal,
            coefficient,
            barrier,
        })
    }

    /// Checks `alpha ≤ l_t ≤ beta` with `0 < alpha ≤ 1 < beta`.
    pub fn validate_barrier_band(&self, alpha: f64, beta: f64) -> Result<(), RbodeError> {
        if !(alpha > 0.0 && alpha <= 1.0 && beta > 1.0) {
            return Err(RbodeError::Regime(format!(
                "band needs 0 < alpha <= 1 < beta, got alpha = {alpha}, beta = {beta}"
            )));
        }
        if let Some((i, &l)) = self
            .barrier
            .values()
            .iter()
            .enumerate()
            .find(|(_, &l)| l < alpha || l > beta)
        {
            return Err(RbodeError::Regime(format!(
                "barrier l = {l} at index {i} outside [{alpha}, {beta}]"
            )));
        }
        Ok(())
    }

    /// `1e-8 · (1 + |x| + sup|l|)`.
    pub fn defect_tol(&self) -> f64 {
        defect_tol(self.terminal, self.barrier.sup_abs())
    }

    /// `1e-6 · (1 + sup|l|)`.
    pub fn contact_tol(&self) -> f64 {
        1e-6 * (1.0 + self.barrier.sup_abs())
    }

    pub fn with_coefficient(&self, coefficient: Coefficient) -> Self {
        Self {
            coefficient,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Representation,
    Picard,
    MonotoneMin,
    MonotoneMax,
    Superlinear,
    /// Explicit `max_s u_t^s` over every grid terminal time (quadratic cost).
    Bruteforce,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Representation => "representation",
            Method::Picard => "picard",
            Method::MonotoneMin => "monotone_min",
            Method::MonotoneMax => "monotone_max",
            Method::Superlinear => "superlinear",
            Method::Bruteforce => "bruteforce",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "representation" => Method::Representation,
            "picard" => Method::Picard,
            "monotone_min" => Method::MonotoneMin,
            "monotone_max" => Method::MonotoneMax,
            "superlinear" => Method::Superlinear,
            "bruteforce" => Method::Bruteforce,
            other => return Err(format!("unknown rbode method `{other}`")),
        })
    }
}

/// Per-interval rule used to turn `∫_{t_i}^{t_{i+1}} φ(y_r) dr` into a number.
#[derive(Debug, Clone, PartialEq)]
pub enum Quadrature {
    /// `Φ(y_{i+1}) − y_{i+1}` with `Φ` the RK4 flow map (`substeps` per interval)
    /// of the stored coefficient.
    Flow { substeps: usize },
    /// Integral of a local cubic interpolant of the grid values of `φ(y)`
    /// that never spans a pushed interval (`pushed[i]` is `y_i = l_i` with
    /// the barrier strictly winning); trapezoid on pushed intervals.
    Cubic { pushed: Vec<bool> },
}

#[derive(Debug, Clone)]
pub struct RbodeSolution {
    pub y: ScalarPath,
    pub k: ScalarPath,
    pub method: Method,
    pub quadrature: Quadrature,
    /// Coefficient the quadrature refers to (the regularized or truncated one
    /// for the approximation methods).
    pub coefficient: Coefficient,
    /// Max defect of the discrete integral equation.
    pub residual: f64,
    /// Integration error estimate from mesh halving (0 for Picard).
    pub defect: f64,
    /// Tolerance the invariants are checked against: the problem's
    /// `defect_tol` plus `1e-8 · sup|y|`.
    pub tol: f64,
    /// Regularization index of the last monotone stage.
    pub regularization_n: Option<f64>,
}

/// Outcome of [`RbodeSolution::check_invariants`].
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantReport {
    /// `min_i (y_i − l_i)`.
    pub barrier_margin: f64,
    /// `min_i (k_{i+1} − k_i)`.
    pub min_increment: f64,
    /// `max_i (y_i − l_i)(k_{i+1} − k_i)`.
    pub skorokhod: f64,
    pub residual: f64,
    pub tol: f64,
    pub pass: bool,
}

impl RbodeSolution {
    pub fn check_invariants(&self, problem: &RbodeProblem) -> InvariantReport {
        let tol = self.tol;
        let y = self.y.values();
        let l = problem.barrier.values();
        let k = self.k.values();
        let barrier_margin = y.iter().zip(l).fold(f64::INFINITY, |m, (a, b)| m.min(a - b));
        let mut min_increment = f64::INFINITY;
        let mut skorokhod: f64 = 0.0;
        for i in 0..y.len() - 1 {
            let dk = k[i + 1] - k[i];
            min_increment = min_increment.min(dk);
            skorokhod = skorokhod.max((y[i] - l[i]) * dk);
        }
        let scale = 1.0 + self.y.sup_abs();
        let pass = barrier_margin >= -tol
            && min_increment >= -tol
            && k[0] == 0.0
            && skorokhod <= tol * scale
            && self.residual <= tol;
        InvariantReport {
            barrier_margin,
            min_increment,
            skorokhod,
            residual: self.residual,
            tol,
            pass,
        }
    }
}

/// Gauss–Legendre (2-point) integral over `[t_i, t_{i+1}]` of the Lagrange
/// interpolant of `g` through the nodes `lo..=hi`.
fn stencil_integral(t: &[f64], g: &[f64], i: usize, lo: usize, hi: usize) -> f64 {
    let h = t[i + 1] - t[i];
    let gauss = [0.5 - 0.5 / 3f64.sqrt(), 0.5 + 0.5 / 3f64.sqrt()];
    let mut total = 0.0;
    for u in gauss {
        let s = t[i] + u * h;
        for a in lo..=hi {
            let mut basis = 1.0;
            for b in lo..=hi {
                if b != a {
                    basis *= (s - t[b]) / (t[a] - t[b]);
                }
            }
            total += 0.5 * h * basis * g[a];
        }
    }
    total
}

/// Per-interval integrals for [`Quadrature::Cubic`]. Unpushed intervals use
/// the cubic through `i−1..=i+2`, shifted or shortened so that it stays
/// inside the run of consecutive unpushed intervals; pushed intervals use
/// the trapezoid rule.
pub(crate) fn segmented_integrals(grid: &TimeGrid, g: &[f64], pushed: &[bool]) -> Vec<f64> {
    let t = grid.points();
    let n = grid.last();
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        if pushed[i] {
            out[i] = 0.5 * (t[i + 1] - t[i]) * (g[i] + g[i + 1]);
            i += 1;
            continue;
        }
        // free run of intervals a..b, nodes a..=b
        let a = i;
        let mut b = i + 1;
        while b < n && !pushed[b] {
            b += 1;
        }
        for j in a..b {
            let (lo, hi) = if b - a >= 3 {
                let lo = j.saturating_sub(1).max(a).min(b - 3);
                (lo, lo + 3)
            } else {
                (a, b)
            };
            out[j] = stencil_integral(t, g, j, lo, hi);
        }
        i = b;
    }
    out
}

/// Per-interval integrals of `φ(y)` under the given quadrature.
pub(crate) fn interval_integrals(
    coefficient: &Coefficient,
    grid: &TimeGrid,
    y: &[f64],
    quadrature: &Quadrature,
) -> Vec<f64> {
    match quadrature {
        Quadrature::Flow { substeps } => (0..grid.last())
            .map(|i| flow_step(coefficient, y[i + 1], grid.step(i), *substeps) - y[i + 1])
            .collect(),
        Quadrature::Cubic { pushed } => {
            let g: Vec<f64> = y.iter().map(|&v| coefficient.eval(v)).collect();
            segmented_integrals(grid, &g, pushed)
        }
    }
}

/// `k_0 = 0`, `k_{i+1} − k_i = y_i − y_{i+1} − Q_i`.
fn reconstruct_k(y: &[f64], q: &[f64]) -> Vec<f64> {
    let mut k = vec![0.0; y.len()];
    for i in 0..q.len() {
        k[i + 1] = k[i] + (y[i] - y[i + 1] - q[i]);
    }
    k
}

/// `max_i |y_i − x − Σ_{j ≥ i} Q_j − (k_N − k_i)|`.
fn integral_residual(y: &[f64], k: &[f64], q: &[f64], terminal: f64) -> f64 {
    let n = y.len() - 1;
    let mut tail = 0.0;
    let mut worst = (y[n] - terminal).abs();
    for i in (0..n).rev() {
        tail += q[i];
        worst = worst.max((y[i] - terminal - tail - (k[n] - k[i])).abs());
    }
    worst
}

pub(crate) fn finish(
    problem: &RbodeProblem,
    coefficient: Coefficient,
    y: Vec<f64>,
    q_for_k: Vec<f64>,
    method: Method,
    quadrature: Quadrature,
    defect: f64,
) -> RbodeSolution {
    let k = reconstruct_k(&y, &q_for_k);
    let q_final = interval_integrals(&coefficient, &problem.grid, &y, &quadrature);
    let residual = integral_residual(&y, &k, &q_final, problem.terminal);
    let tol = ode::scaled_tol(problem.defect_tol(), &y);
    RbodeSolution {
        tol,
        y: ScalarPath::new(y),
        k: ScalarPath::new(k),
        method,
        quadrature,
        coefficient,
        residual,
        defect,
        regularization_n: None,
    }
}

/// Solves the reflected problem with the requested method.
pub fn solve_rbode(problem: &RbodeProblem, method: Method) -> Result<RbodeSolution, RbodeError> {
    match method {
        Method::Representation => representation(problem, &problem.coefficient),
        Method::Picard => picard(problem),
        Method::MonotoneMin => monotone(problem, Direction::Inf),
        Method::MonotoneMax => monotone(problem, Direction::Sup),
        Method::Superlinear => superlinear(problem),
        Method::Bruteforce => bruteforce(problem),
    }
}

/// `y_t = max_{s ≥ t} u_t^s` with every `u^s` an independent unreflected
/// solve. Ties go to the smallest `s`; only the value is kept.
fn bruteforce(problem: &RbodeProblem) -> Result<RbodeSolution, RbodeError> {
    let grid = &problem.grid;
    let n = grid.last();
    let l = problem.barrier.values();
    let coef = &problem.coefficient;
    let solves: Vec<BackwardSolution> = (0..n + 1)
        .into_par_iter()
        .map(|s| {
            let start = if s == n { problem.terminal } else { l[s] };
            solve_backward_ode(coef, start, grid, 0..=s)
        })
        .collect::<Result<_, _>>()?;
    let y: Vec<f64> = (0..=n)
        .map(|t| solves[t..].iter().map(|u| u.at(t)).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let substeps = solves.iter().map(|u| u.substeps).max().unwrap_or(1);
    let defect = solves.iter().map(|u| u.defect).fold(0.0, f64::max);
    let quadrature = Quadrature::Flow { substeps };
    let q = interval_integrals(coef, grid, &y, &quadrature);
    Ok(finish(
        problem,
        coef.clone(),
        y,
        q,
        Method::Bruteforce,
        quadrature,
        defect,
    ))
}

/// `y_i = max(l_i, Φ(y_{i+1}))`, `y_N = x`. Because the one-step flow map
/// is nondecreasing, this backward sweep equals the sup over grid terminal
/// times `s` of the unreflected solutions `u^s`.
fn representation(problem: &RbodeProblem, coef: &Coefficient) -> Result<RbodeSolution, RbodeError> {
    let grid = &problem.grid;
    let barrier = problem.barrier.values();
    let ode::Halved {
        values: y,
        substeps,
        defect,
        ..
    } = ode::with_halving(problem.defect_tol(), |m| {
        ode::sweep(coef, grid, 0..=grid.last(), problem.terminal, Some(barrier), m)
    })?;
    let quadrature = Quadrature::Flow { substeps };
    let q = interval_integrals(coef, grid, &y, &quadrature);
    Ok(finish(
        problem,
        coef.clone(),
        y,
        q,
        Method::Representation,
        quadrature,
        defect,
    ))
}

const PICARD_TOL: f64 = 1e-10;
const PICARD_MAX_ITER: usize = 200;
const PICARD_WARMUP: usize = 20;

/// Iterates the frozen-coefficient reflected problem in Snell form,
/// `y_i = max(l_i, y_{i+1} + Q_i[φ(y^{prev})])`.
fn picard(problem: &RbodeProblem) -> Result<RbodeSolution, RbodeError> {
    if !matches!(problem.coefficient.growth(), GrowthClass::Lipschitz(_)) {
        return Err(RbodeError::WrongGrowthClass {
            method: "picard",
            required: "lipschitz",
            actual: problem.coefficient.growth().name(),
        });
    }
    let grid = &problem.grid;
    let n = grid.last();
    let l = problem.barrier.values();
    let coef = &problem.coefficient;

    let snell = |q: &[f64]| {
        let mut y = vec![0.0; n + 1];
        let mut pushed = vec![false; n];
        y[n] = problem.terminal;
        for i in (0..n).rev() {
            let free = y[i + 1] + q[i];
            pushed[i] = l[i] > free;
            y[i] = if pushed[i] { l[i] } else { free };
        }
        (y, pushed)
    };
    let (mut y, mut pushed) = snell(&vec![0.0; n]);
    let mut prev_change = f64::INFINITY;
    let mut change = f64::INFINITY;
    for iteration in 1..=PICARD_MAX_ITER {
        let g: Vec<f64> = y.iter().map(|&v| coef.eval(v)).collect();
        let q = segmented_integrals(grid, &g, &pushed);
        let (next, next_pushed) = snell(&q);
        if let Some(i) = next.iter().position(|v| !v.is_finite()) {
            return Err(RbodeError::Overflow { time: grid.time(i) });
        }
        change = next.iter().zip(&y).fold(0.0, |m, (a, b)| m.max((a - b).abs()));
        y = next;
        if change <= PICARD_TOL {
            return Ok(finish(
                problem,
                coef.clone(),
                y,
                q,
                Method::Picard,
                Quadrature::Cubic { pushed },
                0.0,
            ));
        }
        if iteration > PICARD_WARMUP && change > prev_change {
            return Err(RbodeError::Divergence { iteration, change });
        }
        prev_change = change;
        pushed = next_pushed;
    }
    Err(RbodeError::NotConverged {
        iterations: PICARD_MAX_ITER,
        change,
    })
}

/// Case-b a-priori bound `|y| ≤ (b + 1) e^{μ_l T} − 1`, `b = |x| ∨ sup|l|`.
pub fn linear_growth_bound(problem: &RbodeProblem, mu_l: f64) -> f64 {
    let b = problem.terminal.abs().max(problem.barrier.sup_abs());
    (b + 1.0) * (mu_l * problem.grid.horizon()).exp() - 1.0
}

/// Settings for the monotone approximation.
#[derive(Debug, Clone)]
pub struct MonotoneSettings {
    /// Regularization indices, increasing.
    pub indices: Vec<f64>,
    pub half_width: f64,
    pub delta: f64,
    /// Stop once successive solutions differ by at most this.
    pub tol: f64,
}

impl MonotoneSettings {
    /// `M = 2 · bound`, `δ = 1e-3 · 2M`, `n_k = max(μ_l, 1) · 2^k` while
    /// `n_k · mesh ≤ 1` (at most 16 doublings; the first index is always kept).
    pub fn default_for(problem: &RbodeProblem) -> Result<Self, RbodeError> {
        let mu_l = match problem.coefficient.growth() {
            GrowthClass::Linear(mu) => *mu,
            other => {
                return Err(RbodeError::WrongGrowthClass {
                    method: "monotone",
                    required: "linear",
                    actual: other.name(),
                })
            }
        };
        let half_width = 2.0 * linear_growth_bound(problem, mu_l).max(1.0);
        let mesh = problem.grid.mesh();
        let n0 = mu_l.max(1.0);
        let mut indices = vec![n0];
        for k in 1..=16 {
            let n = n0 * f64::powi(2.0, k);
            if n * mesh > 1.0 {
                break;
            }
            indices.push(n);
        }
        Ok(Self {
            indices,
            half_width,
            delta: 1e-3 * 2.0 * half_width,
            tol: problem.defect_tol(),
        })
    }
}

/// Solutions `y^n` for the regularized coefficients `φ_n`, in the order of
/// `settings.indices`. Stops early once two successive solutions agree
/// within `settings.tol`.
pub fn monotone_sequence(
    problem: &RbodeProblem,
    direction: Direction,
    settings: &MonotoneSettings,
) -> Result<Vec<RbodeSolution>, RbodeError> {
    let mut out: Vec<RbodeSolution> = Vec::new();
    for &n in &settings.indices {
        let reg = lipschitz_regularize(&problem.coefficient, n, direction, settings.half_width, settings.delta)?;
        let mut sol = representation(&problem.with_coefficient(reg.clone()), &reg)?;
        sol.method = match direction {
            Direction::Inf => Method::MonotoneMin,
            Direction::Sup => Method::MonotoneMax,
        };
        sol.regularization_n = Some(n);
        let done = out
            .last()
            .is_some_and(|prev| prev.y.sup_distance(&sol.y) <= settings.tol);
        out.push(sol);
        if done {
            break;
        }
    }
    Ok(out)
}

fn monotone(problem: &RbodeProblem, direction: Direction) -> Result<RbodeSolution, RbodeError> {
    let settings = MonotoneSettings::default_for(problem)?;
    let mut seq = monotone_sequence(problem, direction, &settings)?;
    Ok(seq.pop().expect("at least one regularization index"))
}

fn superlinear(problem: &RbodeProblem) -> Result<RbodeSolution, RbodeError> {
    let l0 = match problem.coefficient.growth() {
        GrowthClass::Superlinear(l0) => Arc::clone(l0),
        other => {
            return Err(RbodeError::WrongGrowthClass {
                method: "superlinear",
                required: "superlinear",
                actual: other.name(),
            })
        }
    };
    let plan = TruncationPlan::build(problem, &l0)?;
    solve_truncated(problem, &plan)
}

/// Solves with `φ ∘ ρ` and checks `m̲ ≤ y_t ≤ v_t` along the result.
pub fn solve_truncated(problem: &RbodeProblem, plan: &TruncationPlan) -> Result<RbodeSolution, RbodeError> {
    let phi = problem.coefficient.function();
    let (r, big_r) = (plan.r, plan.big_r);
    let composed = Coefficient::new(
        move |y| phi(truncation::rho(r, big_r, y)),
        problem.coefficient.growth().clone(),
        problem.coefficient.is_monotone(),
    );
    let mut sol = representation(&problem.with_coefficient(composed.clone()), &composed)?;
    let tol = sol.tol;
    for (i, (&y, &v)) in sol.y.values().iter().zip(plan.envelope.values()).enumerate() {
        if y < plan.m_lower - tol || y > v + tol {
            return Err(RbodeError::Confinement {
                index: i,
                y,
                lower: plan.m_lower,
                upper: v,
            });
        }
    }
    sol.method = Method::Superlinear;
    Ok(sol)
}

/// Result of [`hitting_time_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct HittingReport {
    pub index: usize,
    pub time: f64,
    /// `|y_t − u_t^{D_t}|` with `u^{D_t}` restarted from `(D_t, y_{D_t})`.
    pub defect: f64,
}

/// First contact time `D_t = inf{u ≥ t : y_u = l_u} ∧ T` and the defect of
/// the representation `y_t = u_t^{D_t}`.
pub fn hitting_time_check(
    solution: &RbodeSolution,
    problem: &RbodeProblem,
    t_index: usize,
) -> Result<HittingReport, RbodeError> {
    if !problem.coefficient.is_monotone() {
        return Err(RbodeError::NotMonotone);
    }
    let n = problem.grid.last();
    if t_index > n {
        return Err(RbodeError::InvalidProblem(format!(
            "time index {t_index} beyond grid end {n}"
        )));
    }
    let contact = problem.contact_tol();
    let y = solution.y.values();
    let l = problem.barrier.values();
    let d = (t_index..n).find(|&u| y[u] - l[u] <= contact).unwrap_or(n);
    let u = solve_backward_ode(&solution.coefficient, y[d], &problem.grid, t_index..=d)?;
    Ok(HittingReport {
        index: d,
        time: problem.grid.time(d),
        defect: (y[t_index] - u.at(t_index)).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tent(grid: &TimeGrid) -> ScalarPath {
        ScalarPath::from_fn(grid, |t| {
            if (0.4..=0.5).contains(&t) {
                (t - 0.4) / 0.1
            } else if (0.5..=0.6).contains(&t) {
                (0.6 - t) / 0.1
            } else {
                0.0
            }
        })
    }

    #[test]
    fn inactive_barrier() {
        let g = TimeGrid::uniform(1.0, 50).unwrap();
        let p = RbodeProblem::new(g.clone(), 1.0, Coefficient::zero(), ScalarPath::constant(&g, 0.0)).unwrap();
        let s = solve_rbode(&p, Method::Representation).unwrap();
        assert!(s.y.values().iter().all(|&v| v == 1.0));
        assert!(s.k.values().iter().all(|&v| v == 0.0));
        assert!(s.check_invariants(&p).pass);
    }

    #[test]
    fn tent_barrier_sup_of_future() {
        let g = TimeGrid::uniform(1.0, 100).unwrap();
        let l = tent(&g);
        let p = RbodeProblem::new(g.clone(), 0.0, Coefficient::zero(), l.clone()).unwrap();
        let s = solve_rbode(&p, Method::Representation).unwrap();
        assert!((s.y[0] - 1.0).abs() < 1e-12);
        for i in 50..=60 {
            assert!((s.y[i] - l[i]).abs() < 1e-12);
        }
        let rep = s.check_invariants(&p);
        assert!(rep.pass, "{rep:?}");
        let h = hitting_time_check(&s, &p, 0).unwrap();
        assert_eq!(h.index, 50);
        assert!((h.time - 0.5).abs() < 1e-12);
        assert!(h.defect <= 1e-8);
    }

    #[test]
    fn picard_matches_representation_for_sine() {
        let g = TimeGrid::uniform(1.0, 200).unwrap();
        let c = Coefficient::new(f64::sin, GrowthClass::Lipschitz(1.0), false);
        let p = RbodeProblem::new(g.clone(), 0.0, c, ScalarPath::constant(&g, -2.0)).unwrap();
        let a = solve_rbode(&p, Method::Representation).unwrap();
        let b = solve_rbode(&p, Method::Picard).unwrap();
        assert!(a.y.sup_distance(&b.y) <= 1e-8);
        assert!(b.check_invariants(&p).pass);
    }

    #[test]
    fn barrier_above_terminal_rejected() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        let err = RbodeProblem::new(g.clone(), 0.0, Coefficient::zero(), ScalarPath::constant(&g, 0.5)).unwrap_err();
        assert!(matches!(err, RbodeError::InvalidProblem(_)));
        // degenerate l_T = x is fine
        assert!(RbodeProblem::new(g.clone(), 0.5, Coefficient::zero(), ScalarPath::constant(&g, 0.5)).is_ok());
    }

    #[test]
    fn method_class_requirements() {
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        let c = Coefficient::new(|y| y, GrowthClass::Linear(1.0), true);
        let p = RbodeProblem::new(g.clone(), 1.0, c, ScalarPath::constant(&g, 0.5)).unwrap();
        assert!(matches!(
            solve_rbode(&p, Method::Picard),
            Err(RbodeError::WrongGrowthClass { .. })
        ));
        assert!(matches!(
            solve_rbode(&p, Method::Superlinear),
            Err(RbodeError::WrongGrowthClass { .. })
        ));
    }

    #[test]
    fn superlinear_needs_positive_barrier() {
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        let l0: ScalarFn = Arc::new(|y: f64| 1.0 + y.abs() * (1.0 + y.abs()).ln());
        let c = Coefficient::from_arc(Arc::clone(&l0), GrowthClass::Superlinear(l0), true);
        let p = RbodeProblem::new(g.clone(), 1.0, c, ScalarPath::constant(&g, 0.0)).unwrap();
        assert!(matches!(
            solve_rbode(&p, Method::Superlinear),
            Err(RbodeError::Regime(_))
        ));
    }

    #[test]
    fn zero_barrier_zero_terminal_contact_at_start() {
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        let p = RbodeProblem::new(g.clone(), 0.0, Coefficient::zero(), ScalarPath::constant(&g, 0.0)).unwrap();
        let s = solve_rbode(&p, Method::Representation).unwrap();
        let h = hitting_time_check(&s, &p, 0).unwrap();
        assert_eq!(h.index, 0);
        assert_eq!(s.y[0], 0.0);
    }

    #[test]
    fn hitting_time_without_contact_is_horizon() {
        let g = TimeGrid::uniform(1.0, 100).unwrap();
        let c = Coefficient::new(|y| 0.5 * y, GrowthClass::Lipschitz(0.5), true);
        let p = RbodeProblem::new(g.clone(), 2.0, c, ScalarPath::constant(&g, -1.0)).unwrap();
        let s = solve_rbode(&p, Method::Representation).unwrap();
        let h = hitting_time_check(&s, &p, 10).unwrap();
        assert_eq!(h.index, 100);
        assert!(h.defect < 1e-10);
    }

    #[test]
    fn barrier_band_validation() {
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        let p = RbodeProblem::new(g.clone(), 2.0, Coefficient::zero(), ScalarPath::constant(&g, 0.5)).unwrap();
        assert!(p.validate_barrier_band(0.5, 2.0).is_ok());
        assert!(p.validate_barrier_band(0.6, 2.0).is_err());
        assert!(p.validate_barrier_band(0.5, 1.0).is_err());
    }
}
