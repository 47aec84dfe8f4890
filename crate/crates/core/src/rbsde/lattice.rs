//! Recombining binomial lattice with exact conditional expectations (d = 1).

use rayon::prelude::*;

use super::{Driver, RbsdeError, Scenario};
use crate::grid::TimeGrid;

/// Binomial approximation of a one-dimensional Brownian motion:
/// `B(i, j) = (2j − i)√dt`, up and down moves with probability 1/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    horizon: f64,
    steps: usize,
    dt: f64,
    sqrt_dt: f64,
}

pub fn build_lattice(horizon: f64, steps: usize) -> Result<Lattice, RbsdeError> {
    if steps == 0 {
        return Err(RbsdeError::InvalidScenario("lattice needs at least one step".into()));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(RbsdeError::InvalidScenario(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let dt = horizon / steps as f64;
    Ok(Lattice {
        horizon,
        steps,
        dt,
        sqrt_dt: dt.sqrt(),
    })
}

impl Lattice {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn sqrt_dt(&self) -> f64 {
        self.sqrt_dt
    }

    pub fn time(&self, i: usize) -> f64 {
        self.horizon * i as f64 / self.steps as f64
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> f64 {
        (2.0 * j as f64 - i as f64) * self.sqrt_dt
    }

    pub fn nodes(&self, i: usize) -> Vec<f64> {
        (0..=i).map(|j| self.node(i, j)).collect()
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid::uniform(self.horizon, self.steps).expect("positive horizon and steps")
    }

    /// Binomial probabilities of the nodes at every step, built by forward
    /// averaging so no factorials are formed.
    pub fn probabilities(&self) -> Vec<Vec<f64>> {
        let mut rows = Vec::with_capacity(self.steps + 1);
        rows.push(vec![1.0]);
        for i in 0..self.steps {
            let prev: &Vec<f64> = &rows[i];
            let next: Vec<f64> = (0..=i + 1)
                .map(|j| {
                    let down = if j <= i { prev[j] } else { 0.0 };
                    let up = if j >= 1 { prev[j - 1] } else { 0.0 };
                    0.5 * (down + up)
                })
                .collect();
            rows.push(next);
        }
        rows
    }
}

/// How the `y`-argument of the driver is chosen at each node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriverMode {
    /// `ŷ` = mean of the two successors.
    Explicit,
    /// `ŷ ← max(L, mean + f(t, ŷ, Z) dt)` iterated to `1e-12`.
    FixedPoint,
}

impl DriverMode {
    /// Explicit for drivers flagged Lipschitz, fixed-point otherwise.
    pub fn default_for(driver: &Driver) -> Self {
        if driver.lipschitz().is_some() {
            DriverMode::Explicit
        } else {
            DriverMode::FixedPoint
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DriverMode::Explicit => "explicit",
            DriverMode::FixedPoint => "fixed_point",
        }
    }
}

const FIXED_POINT_TOL: f64 = 1e-12;
const FIXED_POINT_MAX_ITER: usize = 50;

/// Node-indexed lattice solution. Rows are indexed by step `i`, entries by
/// node `j = 0..=i`.
#[derive(Debug, Clone)]
pub struct LatticeSolution {
    pub lattice: Lattice,
    pub mode: DriverMode,
    pub y: Vec<Vec<f64>>,
    /// `Z(i, j)` for `i < N`.
    pub z: Vec<Vec<f64>>,
    /// Reflection push `ΔK(i, j) = Y(i, j) − C(i, j)` for `i < N`.
    pub dk: Vec<Vec<f64>>,
    /// Driver increment `f(t_i, ŷ, Z) dt` for `i < N`.
    pub fdt: Vec<Vec<f64>>,
    pub barrier: Vec<Vec<f64>>,
    /// `E[K_{t_i} | node (i, j)]`, with `K_{t_i} = Σ_{k<i} ΔK_k`.
    pub k_mean: Vec<Vec<f64>>,
    /// `E[K_{t_i}² | node (i, j)]`.
    pub k_second: Vec<Vec<f64>>,
    pub probabilities: Vec<Vec<f64>>,
}

/// One row of the per-step summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileRow {
    pub t: f64,
    /// `Y` at the central node `j = ⌈i/2⌉`.
    pub y_center: f64,
    pub k_mean: f64,
    /// `None` at the horizon.
    pub z_rms: Option<f64>,
}

impl LatticeSolution {
    pub fn y0(&self) -> f64 {
        self.y[0][0]
    }

    pub fn steps(&self) -> usize {
        self.lattice.steps()
    }

    /// `E[K_{t_i}]`.
    pub fn expected_k(&self, i: usize) -> f64 {
        self.probabilities[i]
            .iter()
            .zip(&self.k_mean[i])
            .map(|(p, k)| p * k)
            .sum()
    }

    /// `E[K_T²]`.
    pub fn expected_k_terminal_sq(&self) -> f64 {
        let n = self.steps();
        self.probabilities[n]
            .iter()
            .zip(&self.k_second[n])
            .map(|(p, k)| p * k)
            .sum()
    }

    pub fn z_rms(&self, i: usize) -> f64 {
        self.probabilities[i]
            .iter()
            .zip(&self.z[i])
            .map(|(p, z)| p * z * z)
            .sum::<f64>()
            .sqrt()
    }

    pub fn profile(&self) -> Vec<ProfileRow> {
        (0..=self.steps())
            .map(|i| ProfileRow {
                t: self.lattice.time(i),
                y_center: self.y[i][i.div_ceil(2)],
                k_mean: self.expected_k(i),
                z_rms: (i < self.steps()).then(|| self.z_rms(i)),
            })
            .collect()
    }

    /// `Σ_{i,j} P(i, j) (Y − L)(i, j) ΔK(i, j)`.
    pub fn skorokhod_residual(&self) -> f64 {
        (0..self.steps())
            .map(|i| {
                (0..=i)
                    .map(|j| self.probabilities[i][j] * (self.y[i][j] - self.barrier[i][j]) * self.dk[i][j])
                    .sum::<f64>()
            })
            .sum()
    }

    /// Largest `L − Y` over all nodes (nonpositive when `Y ≥ L`).
    pub fn barrier_violation(&self) -> f64 {
        self.y
            .iter()
            .zip(&self.barrier)
            .flat_map(|(y, l)| y.iter().zip(l).map(|(a, b)| b - a))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Validates `|L| ≤ a` at every node and `L_T ≤ ξ` at the horizon.
pub fn validate_on_lattice(scenario: &Scenario, lattice: &Lattice) -> Result<(), RbsdeError> {
    if scenario.dimension != 1 {
        return Err(RbsdeError::InvalidScenario(format!(
            "lattice backend needs dimension 1, got {}",
            scenario.dimension
        )));
    }
    if (scenario.horizon - lattice.horizon()).abs() > 1e-12 * scenario.horizon {
        return Err(RbsdeError::InvalidScenario(format!(
            "lattice horizon {} differs from scenario horizon {}",
            lattice.horizon(),
            scenario.horizon
        )));
    }
    let n = lattice.steps();
    for i in 0..=n {
        let t = lattice.time(i);
        for j in 0..=i {
            scenario.check_state(t, &[lattice.node(i, j)], i == n)?;
        }
    }
    Ok(())
}

/// Reflected backward Euler on the lattice: `Y(N) = ξ`, then
/// `C = mean + f(t_i, ŷ, Z) dt`, `Y = max(L, C)`, `ΔK = Y − C`.
pub fn solve_reflected_lattice(
    scenario: &Scenario,
    lattice: &Lattice,
    mode: DriverMode,
) -> Result<LatticeSolution, RbsdeError> {
    validate_on_lattice(scenario, lattice)?;
    let n = lattice.steps();
    let dt = lattice.dt();
    let two_sqrt_dt = 2.0 * lattice.sqrt_dt();
    let mut y: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
    let mut z: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut dk: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut fdt: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut barrier: Vec<Vec<f64>> = vec![Vec::new(); n + 1];

    let t_end = lattice.time(n);
    y[n] = (0..=n).map(|j| scenario.xi(&[lattice.node(n, j)])).collect();
    barrier[n] = (0..=n).map(|j| scenario.l(t_end, &[lattice.node(n, j)])).collect();
    if let Some(j) = y[n].iter().position(|v| !v.is_finite()) {
        return Err(RbsdeError::Overflow { step: n, node: j });
    }

    for i in (0..n).rev() {
        let t = lattice.time(i);
        let next = &y[i + 1];
        let row: Vec<(f64, f64, f64, f64, f64)> = (0..i + 1)
            .into_par_iter()
            .with_min_len(128)
            .map(|j| {
                let (up, down) = (next[j + 1], next[j]);
                let mean = 0.5 * (up + down);
                let zz = (up - down) / two_sqrt_dt;
                let l = scenario.l(t, &[lattice.node(i, j)]);
                let zs = [zz];
                let y_hat = match mode {
                    DriverMode::Explicit => mean,
                    DriverMode::FixedPoint => {
                        let mut guess = mean;
                        let mut converged = false;
                        for _ in 0..FIXED_POINT_MAX_ITER {
                            let update = l.max(mean + scenario.driver.eval(t, guess, &zs) * dt);
                            let done = (update - guess).abs() <= FIXED_POINT_TOL * update.abs().max(1.0);
                            guess = update;
                            if done {
                                converged = true;
                                break;
                            }
                        }
                        if !converged {
                            return Err(RbsdeError::Mode { step: i, node: j });
                        }
                        guess
                    }
                };
                let step = scenario.driver.eval(t, y_hat, &zs) * dt;
                let c = mean + step;
                let value = l.max(c);
                if !value.is_finite() {
                    return Err(RbsdeError::Overflow { step: i, node: j });
                }
                Ok((value, zz, value - c, step, l))
            })
            .collect::<Result<_, RbsdeError>>()?;
        y[i] = row.iter().map(|r| r.0).collect();
        z[i] = row.iter().map(|r| r.1).collect();
        dk[i] = row.iter().map(|r| r.2).collect();
        fdt[i] = row.iter().map(|r| r.3).collect();
        barrier[i] = row.iter().map(|r| r.4).collect();
    }

    let (k_mean, k_second) = conditional_k_moments(&dk);
    Ok(LatticeSolution {
        lattice: *lattice,
        mode,
        y,
        z,
        dk,
        fdt,
        barrier,
        k_mean,
        k_second,
        probabilities: lattice.probabilities(),
    })
}

/// Forward pass for `E[K_{t_i} | node]` and `E[K_{t_i}² | node]`. Given the
/// node `(i + 1, j)`, the parent is `(i, j − 1)` with probability `j/(i+1)`
/// and `(i, j)` otherwise.
fn conditional_k_moments(dk: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = dk.len();
    let mut mean = vec![vec![0.0]];
    let mut second = vec![vec![0.0]];
    for i in 0..n {
        let denom = (i + 1) as f64;
        let (m_prev, s_prev) = (&mean[i], &second[i]);
        let (m, s): (Vec<f64>, Vec<f64>) = (0..=i + 1)
            .map(|j| {
                let mut acc = (0.0, 0.0);
                let mut add = |parent: usize, w: f64| {
                    let d = dk[i][parent];
                    acc.0 += w * (m_prev[parent] + d);
                    acc.1 += w * (s_prev[parent] + 2.0 * d * m_prev[parent] + d * d);
                };
                if j >= 1 {
                    add(j - 1, j as f64 / denom);
                }
                if j <= i {
                    add(j, (i + 1 - j) as f64 / denom);
                }
                acc
            })
            .unzip();
        mean.push(m);
        second.push(s);
    }
    (mean, second)
}
