//! Backward integration of `u_t = u_s + ∫_t^s φ(u_r) dr` on a grid.
//!
//! Each grid interval is integrated with the classical four-stage
//! Runge-Kutta scheme, split into `m` equal substeps. The accuracy estimate
//! ("defect") is the sup-norm gap between the `m` and `2m` sweeps; the `2m`
//! sweep is returned. One retry with `2m = 4` is allowed before giving up.
//! The tolerance grows with the size of the solution itself, since
//! superlinear flows can exceed their terminal value by many orders.

use std::ops::RangeInclusive;

use super::{Coefficient, RbodeError};
use crate::grid::TimeGrid;

/// Relative part of the integration tolerance: `defect_tol = DEFECT_REL * scale`.
pub const DEFECT_REL: f64 = 1e-8;

/// `1e-8 · (1 + |terminal| + sup|l|)`.
pub fn defect_tol(terminal: f64, barrier_sup_abs: f64) -> f64 {
    DEFECT_REL * (1.0 + terminal.abs() + barrier_sup_abs)
}

/// `base` plus `1e-8 · sup|values|`.
pub(crate) fn scaled_tol(base: f64, values: &[f64]) -> f64 {
    base + DEFECT_REL * values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// One step of the backward flow map over an interval of width `h`.
#[inline]
pub fn flow_step(phi: &Coefficient, y: f64, h: f64, substeps: usize) -> f64 {
    let dt = h / substeps as f64;
    let mut u = y;
    for _ in 0..substeps {
        let k1 = phi.eval(u);
        let k2 = phi.eval(u + 0.5 * dt * k1);
        let k3 = phi.eval(u + 0.5 * dt * k2);
        let k4 = phi.eval(u + dt * k3);
        u += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    u
}

/// Backward sweep from index `end` down to `start`. With a barrier, each
/// value is projected as `max(l_i, ·)` (the dynamic-programming form of the
/// sup over terminal times).
pub(crate) fn sweep(
    phi: &Coefficient,
    grid: &TimeGrid,
    range: RangeInclusive<usize>,
    terminal: f64,
    barrier: Option<&[f64]>,
    substeps: usize,
) -> Result<Vec<f64>, RbodeError> {
    let (start, end) = (*range.start(), *range.end());
    let mut out = vec![0.0; end - start + 1];
    out[end - start] = terminal;
    for i in (start..end).rev() {
        let mut u = flow_step(phi, out[i + 1 - start], grid.step(i), substeps);
        if !u.is_finite() {
            return Err(RbodeError::Overflow { time: grid.time(i) });
        }
        if let Some(l) = barrier {
            u = u.max(l[i]);
        }
        out[i - start] = u;
    }
    Ok(out)
}

/// Accepted sweep from [`with_halving`].
pub(crate) struct Halved {
    pub values: Vec<f64>,
    pub substeps: usize,
    pub defect: f64,
    pub tol: f64,
}

/// Runs `run(m)` for `m = 1, 2, 4, 8, 16` until two consecutive sweeps agree within
/// `scaled_tol(base_tol, fine)`.
pub(crate) fn with_halving(
    base_tol: f64,
    run: impl Fn(usize) -> Result<Vec<f64>, RbodeError>,
) -> Result<Halved, RbodeError> {
    let mut coarse = run(1)?;
    let mut defect = f64::INFINITY;
    let mut tol = base_tol;
    for m in [2usize, 4, 8, 16] {
        let fine = run(m)?;
        defect = coarse.iter().zip(&fine).fold(0.0, |acc, (a, b)| acc.max((a - b).abs()));
        tol = scaled_tol(base_tol, &fine);
        if defect <= tol {
            return Ok(Halved {
                values: fine,
                substeps: m,
                defect,
                tol,
            });
        }
        coarse = fine;
    }
    Err(RbodeError::Accuracy { defect, tol })
}

/// Output of [`solve_backward_ode`].
#[derive(Debug, Clone)]
pub struct BackwardSolution {
    /// First grid index covered.
    pub start: usize,
    /// `values[k]` is `u` at grid index `start + k`.
    pub values: Vec<f64>,
    pub substeps: usize,
    pub defect: f64,
    pub tol: f64,
}

impl BackwardSolution {
    pub fn at(&self, index: usize) -> f64 {
        self.values[index - self.start]
    }
}

/// Solves the unreflected backward ODE on grid indices `horizon = t0..=s`
/// with `u_s = terminal_value`.
pub fn solve_backward_ode(
    coefficient: &Coefficient,
    terminal_value: f64,
    grid: &TimeGrid,
    horizon: RangeInclusive<usize>,
) -> Result<BackwardSolution, RbodeError> {
    let (start, end) = (*horizon.start(), *horizon.end());
    if start > end || end > grid.last() {
        return Err(RbodeError::InvalidProblem(format!(
            "horizon {start}..={end} outside grid 0..={}",
            grid.last()
        )));
    }
    let run = with_halving(defect_tol(terminal_value, 0.0), |m| {
        sweep(coefficient, grid, start..=end, terminal_value, None, m)
    })?;
    Ok(BackwardSolution {
        start,
        values: run.values,
        substeps: run.substeps,
        defect: run.defect,
        tol: run.tol,
    })
}
