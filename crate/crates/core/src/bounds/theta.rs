use rayon::prelude::*;

use super::{BoundsError, GrowthTransform};
use crate::grid::{ScalarPath, TimeGrid};
use crate::rbode::{solve_rbode, Method, RbodeProblem, RbodeSolution};

/// Default upper bound on the mesh used for θ solves.
pub const THETA_MAX_MESH: f64 = 1e-3;

/// Reflected backward ODE solution `θ_t(x)` with barrier `e^{γ a_t}`.
#[derive(Debug, Clone)]
pub struct ThetaSolution {
    pub theta: ScalarPath,
    pub k: ScalarPath,
    pub terminal_x: f64,
    pub barrier_a: ScalarPath,
    pub problem: RbodeProblem,
    pub solution: RbodeSolution,
}

impl ThetaSolution {
    /// `θ ≥ e^{γa}`, `θ_T = e^{γx}`, `k` nondecreasing from 0, Skorokhod,
    /// and `θ` nonincreasing in `t`.
    pub fn check(&self) -> Result<(), BoundsError> {
        let report = self.solution.check_invariants(&self.problem);
        if !report.pass {
            return Err(BoundsError::Invariant(format!("θ solve invariants: {report:?}")));
        }
        let v = self.theta.values();
        if v[v.len() - 1] != self.problem.terminal {
            return Err(BoundsError::Invariant("θ_T differs from e^{γx}".into()));
        }
        if let Some(i) = (1..v.len()).find(|&i| v[i] > v[i - 1] + report.tol) {
            return Err(BoundsError::Invariant(format!("θ increases in t at index {i}")));
        }
        Ok(())
    }
}

/// Solves `θ_t(x) = e^{γx} + ∫_t^T H(θ_s) ds + k_T − k_t`, `θ_t ≥ e^{γ a_t}`.
pub fn solve_theta(
    x: f64,
    transform: &GrowthTransform,
    a: &ScalarPath,
    grid: &TimeGrid,
) -> Result<ThetaSolution, BoundsError> {
    a.check_against(grid)
        .map_err(|e| BoundsError::InvalidProblem(e.to_string()))?;
    if x < a.last() {
        return Err(BoundsError::InvalidProblem(format!(
            "terminal x = {x} below barrier a_T = {}",
            a.last()
        )));
    }
    let gamma = transform.gamma();
    let barrier = a.map(|v| (gamma * v).exp());
    let problem = RbodeProblem::new(grid.clone(), (gamma * x).exp(), transform.coefficient(), barrier)?;
    let solution = solve_rbode(&problem, Method::Representation)?;
    Ok(ThetaSolution {
        theta: solution.y.clone(),
        k: solution.k.clone(),
        terminal_x: x,
        barrier_a: a.clone(),
        problem,
        solution,
    })
}

/// `ln θ_t` for the linear flavor when the barrier never binds and
/// `θ ≥ 1` along the flow: `e^{βτ} γx + (αγ/β)(e^{βτ} − 1)`, `τ = T − t`.
pub fn linear_theta_log(alpha: f64, beta: f64, gamma: f64, x: f64, tau: f64) -> f64 {
    if beta == 0.0 {
        gamma * x + alpha * gamma * tau
    } else {
        let g = (beta * tau).exp();
        g * gamma * x + alpha * gamma / beta * (g - 1.0)
    }
}

/// `θ_t(x)` for a set of terminals on a common grid, with monotone cubic
/// interpolation of `ln θ_t` in `x` between solved terminals.
#[derive(Debug, Clone)]
pub struct ThetaFamily {
    gamma: f64,
    grid: TimeGrid,
    xs: Vec<f64>,
    /// `log_theta[i][k] = ln θ_{t_i}(xs[k])`.
    log_theta: Vec<Vec<f64>>,
    slopes: Vec<Vec<f64>>,
}

impl ThetaFamily {
    /// Solves once per distinct terminal, on a refinement of `grid` with mesh
    /// at most `max_mesh`, and keeps the values at the points of `grid`.
    pub fn solve(
        terminals: &[f64],
        transform: &GrowthTransform,
        a: &ScalarPath,
        grid: &TimeGrid,
        max_mesh: f64,
    ) -> Result<Self, BoundsError> {
        let mut xs: Vec<f64> = terminals.to_vec();
        if xs.iter().any(|x| !x.is_finite()) || xs.is_empty() {
            return Err(BoundsError::InvalidProblem(
                "terminals must be finite and nonempty".into(),
            ));
        }
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        a.check_against(grid)
            .map_err(|e| BoundsError::InvalidProblem(e.to_string()))?;
        let factor = (grid.mesh() / max_mesh).ceil().max(1.0) as usize;
        let fine = grid
            .refine(factor)
            .map_err(|e| BoundsError::InvalidProblem(e.to_string()))?;
        let fine_a = a.interpolate(grid, &fine);
        let columns: Vec<Vec<f64>> = xs
            .par_iter()
            .map(|&x| {
                let sol = solve_theta(x, transform, &fine_a, &fine)?;
                Ok(sol.theta.restrict(factor).values().iter().map(|v| v.ln()).collect())
            })
            .collect::<Result<_, BoundsError>>()?;
        let log_theta: Vec<Vec<f64>> = (0..grid.len())
            .map(|i| columns.iter().map(|c| c[i]).collect())
            .collect();
        let slopes = log_theta.iter().map(|row| pchip_slopes(&xs, row)).collect();
        Ok(Self {
            gamma: transform.gamma(),
            grid: grid.clone(),
            xs,
            log_theta,
            slopes,
        })
    }

    /// Family on `count` equally spaced terminals of `[lo, hi]`; equal
    /// spacing in `x` is geometric spacing in `e^{γx}`.
    pub fn on_range(
        lo: f64,
        hi: f64,
        count: usize,
        transform: &GrowthTransform,
        a: &ScalarPath,
        grid: &TimeGrid,
    ) -> Result<Self, BoundsError> {
        if !(hi > lo) || count < 2 {
            return Err(BoundsError::InvalidProblem(format!(
                "need lo < hi and count ≥ 2 (lo = {lo}, hi = {hi}, count = {count})"
            )));
        }
        let xs: Vec<f64> = (0..count)
            .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
            .collect();
        Self::solve(&xs, transform, a, grid, THETA_MAX_MESH)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn terminals(&self) -> &[f64] {
        &self.xs
    }

    /// `ln θ_{t_i}(x)`.
    pub fn log_theta(&self, t_index: usize, x: f64) -> Result<f64, BoundsError> {
        let row = self
            .log_theta
            .get(t_index)
            .ok_or_else(|| BoundsError::InvalidProblem(format!("time index {t_index} out of range")))?;
        let xs = &self.xs;
        let last = xs.len() - 1;
        let tol = 1e-12 * (1.0 + x.abs());
        if x < xs[0] - tol || x > xs[last] + tol {
            return Err(BoundsError::OutOfRange {
                x,
                lo: xs[0],
                hi: xs[last],
            });
        }
        let k = xs.partition_point(|&v| v < x - tol);
        if k <= last && (xs[k] - x).abs() <= tol {
            return Ok(row[k]);
        }
        let k = k - 1;
        Ok(hermite(
            xs[k],
            xs[k + 1],
            row[k],
            row[k + 1],
            self.slopes[t_index][k],
            self.slopes[t_index][k + 1],
            x,
        ))
    }

    pub fn theta(&self, t_index: usize, x: f64) -> Result<f64, BoundsError> {
        self.log_theta(t_index, x).map(f64::exp)
    }
}

/// Fritsch-Carlson slopes for a monotone piecewise-cubic interpolant.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 1 {
        return vec![0.0];
    }
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let d: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    let mut m = vec![0.0; n];
    m[0] = d[0];
    m[n - 1] = d[n - 2];
    for k in 1..n - 1 {
        if d[k - 1] * d[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            m[k] = (w1 + w2) / (w1 / d[k - 1] + w2 / d[k]);
        }
    }
    m
}

fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, m0: f64, m1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let s = (x - x0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * h * m0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * h * m1
}

/// Checks that `samples` is a list of `(probability, value)` pairs whose
/// probabilities are nonnegative and sum to 1 within `1e-12`.
pub fn validate_distribution(samples: &[(f64, f64)]) -> Result<(), BoundsError> {
    if samples.is_empty() {
        return Err(BoundsError::InvalidDistribution("empty sample set".into()));
    }
    if let Some(&(p, _)) = samples.iter().find(|(p, _)| !(*p >= 0.0)) {
        return Err(BoundsError::InvalidDistribution(format!("negative probability {p}")));
    }
    let total: f64 = samples.iter().map(|(p, _)| p).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(BoundsError::InvalidDistribution(format!(
            "probabilities sum to {total}"
        )));
    }
    Ok(())
}

/// `(1/γ) ln Σ p_i θ_t(ξ_i ∨ a_T)`, evaluated in log-sum-exp form.
pub fn a_priori_bound(
    family: &ThetaFamily,
    samples: &[(f64, f64)],
    a_terminal: f64,
    t_index: usize,
) -> Result<f64, BoundsError> {
    validate_distribution(samples)?;
    let logs: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(p, _)| *p > 0.0)
        .map(|&(p, xi)| Ok((p, family.log_theta(t_index, xi.max(a_terminal))?)))
        .collect::<Result<_, BoundsError>>()?;
    let top = logs.iter().fold(f64::NEG_INFINITY, |m, &(_, l)| m.max(l));
    let sum: f64 = logs.iter().map(|&(p, l)| p * (l - top).exp()).sum();
    Ok((top + sum.ln()) / family.gamma())
}

/// `Σ p_i e^{c γ e^{βT} |ξ_i|}` with `c = 2` when `doubled`.
pub fn integrability_check(samples: &[(f64, f64)], gamma: f64, beta: f64, horizon: f64, doubled: bool) -> f64 {
    let c = if doubled { 2.0 } else { 1.0 };
    let rate = c * gamma * (beta * horizon).exp();
    samples.iter().map(|&(p, xi)| p * (rate * xi.abs()).exp()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::build_h_linear;

    #[test]
    fn pchip_is_exact_on_lines_and_monotone() {
        let x = [0.0, 0.5, 2.0, 3.0];
        let y = [1.0, 2.0, 5.0, 7.0];
        let m = pchip_slopes(&x, &y);
        for k in 0..3 {
            let mut prev = y[k];
            for j in 1..=20 {
                let xv = x[k] + (x[k + 1] - x[k]) * j as f64 / 20.0;
                let v = hermite(x[k], x[k + 1], y[k], y[k + 1], m[k], m[k + 1], xv);
                assert!(v >= prev - 1e-14);
                prev = v;
            }
        }
        let lin = [1.0, 2.0, 5.0, 7.0].map(|v: f64| 3.0 * v - 1.0);
        let xl = [1.0, 2.0, 5.0, 7.0];
        let ml = pchip_slopes(&xl, &lin);
        let v = hermite(xl[1], xl[2], lin[1], lin[2], ml[1], ml[2], 3.3);
        assert!((v - (3.0 * 3.3 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_h_gives_flat_theta() {
        let g = TimeGrid::uniform(1.0, 20).unwrap();
        let h = build_h_linear(0.0, 0.0, 1.0, false).unwrap();
        let s = solve_theta(0.0, &h, &ScalarPath::constant(&g, 0.0), &g).unwrap();
        assert!(s.theta.values().iter().all(|&v| v == 1.0));
        assert!(s.k.values().iter().all(|&v| v == 0.0));
        s.check().unwrap();
    }

    #[test]
    fn terminal_below_barrier_rejected() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        let h = build_h_linear(1.0, 1.0, 1.0, true).unwrap();
        assert!(matches!(
            solve_theta(-1.0, &h, &ScalarPath::constant(&g, 0.0), &g),
            Err(BoundsError::InvalidProblem(_))
        ));
    }

    #[test]
    fn distribution_validation() {
        assert!(validate_distribution(&[(0.5, 0.0), (0.5, 1.0)]).is_ok());
        assert!(validate_distribution(&[(0.6, 0.0), (0.5, 1.0)]).is_err());
        assert!(validate_distribution(&[(1.5, 0.0), (-0.5, 1.0)]).is_err());
    }

    #[test]
    fn integrability_examples() {
        assert_eq!(integrability_check(&[(1.0, 0.0)], 1.0, 0.3, 1.0, false), 1.0);
        let v = integrability_check(&[(0.5, -1.0), (0.5, 1.0)], 1.0, 0.0, 1.0, false);
        assert!((v - std::f64::consts::E).abs() < 1e-15);
        let v = integrability_check(&[(0.5, -1.0), (0.5, 1.0)], 1.0, 0.0, 1.0, true);
        assert!((v - 2f64.exp()).abs() < 1e-14);
    }
}
