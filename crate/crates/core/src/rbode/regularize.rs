//! Inf/sup-convolution regularization `φ_n(y) = inf_x {φ(x) + n|y − x|}`.
//!
//! The infimum over the rationals is realized on the δ-grid of `[-M, M]`:
//! `φ` is replaced by its piecewise-linear interpolant `φ̃` on that grid and
//! `φ_n` is the exact inf-convolution of `φ̃`. For a piecewise-linear `φ̃`
//! the infimum is attained either at a grid vertex or at `x = y`, so with
//! the two running-minimum passes below each evaluation is O(1).

use super::{Coefficient, GrowthClass, RbodeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `inf_x {φ(x) + n|y − x|}`, approximates from below.
    Inf,
    /// `sup_x {φ(x) − n|y − x|}`, approximates from above.
    Sup,
}

#[derive(Debug, Clone)]
struct Envelope {
    lo: f64,
    delta: f64,
    n: f64,
    /// Signed sample values (negated for [`Direction::Sup`]).
    f: Vec<f64>,
    /// `left[j] = min_{k ≤ j} f_k + n (x_j − x_k)`.
    left: Vec<f64>,
    /// `right[j] = min_{k ≥ j} f_k + n (x_k − x_j)`.
    right: Vec<f64>,
}

impl Envelope {
    fn x(&self, j: usize) -> f64 {
        self.lo + j as f64 * self.delta
    }

    fn eval(&self, y: f64) -> f64 {
        let last = self.f.len() - 1;
        if y <= self.lo {
            return self.right[0] + self.n * (self.lo - y);
        }
        let hi = self.x(last);
        if y >= hi {
            return self.left[last] + self.n * (y - hi);
        }
        let j = (((y - self.lo) / self.delta).floor() as usize).min(last - 1);
        let (x0, x1) = (self.x(j), self.x(j + 1));
        let w = ((y - x0) / self.delta).clamp(0.0, 1.0);
        let interp = self.f[j] * (1.0 - w) + self.f[j + 1] * w;
        let from_left = self.left[j] + self.n * (y - x0);
        let from_right = self.right[j + 1] + self.n * (x1 - y);
        interp.min(from_left).min(from_right)
    }
}

/// Builds the `n`-Lipschitz regularization of `coefficient` over the search
/// box `[-half_width, half_width]` scanned with step `delta`.
///
/// Fails with [`RbodeError::BoxTooSmall`] when, for some grid point in the
/// inner half of the box, the minimizing vertex is a box edge.
pub fn lipschitz_regularize(
    coefficient: &Coefficient,
    n: f64,
    direction: Direction,
    half_width: f64,
    delta: f64,
) -> Result<Coefficient, RbodeError> {
    if !(n > 0.0) || !(half_width > 0.0) || !(delta > 0.0) || delta > half_width {
        return Err(RbodeError::InvalidProblem(format!(
            "regularization needs n > 0 and 0 < δ ≤ M (n = {n}, M = {half_width}, δ = {delta})"
        )));
    }
    if let GrowthClass::Linear(mu_l) = coefficient.growth() {
        if n < *mu_l {
            return Err(RbodeError::InvalidProblem(format!(
                "regularization index n = {n} below the linear-growth constant {mu_l}"
            )));
        }
    }
    let count = (2.0 * half_width / delta).round() as usize + 1;
    let lo = -half_width;
    let sign = match direction {
        Direction::Inf => 1.0,
        Direction::Sup => -1.0,
    };
    let f: Vec<f64> = (0..count)
        .map(|j| sign * coefficient.eval(lo + j as f64 * delta))
        .collect();
    let step = n * delta;
    let mut left = f.clone();
    let mut left_arg: Vec<usize> = (0..count).collect();
    for j in 1..count {
        let cand = left[j - 1] + step;
        if cand < left[j] {
            left[j] = cand;
            left_arg[j] = left_arg[j - 1];
        }
    }
    let mut right = f.clone();
    let mut right_arg: Vec<usize> = (0..count).collect();
    for j in (0..count - 1).rev() {
        let cand = right[j + 1] + step;
        if cand < right[j] {
            right[j] = cand;
            right_arg[j] = right_arg[j + 1];
        }
    }
    let inner = half_width / 2.0;
    for j in 0..count {
        let y = lo + j as f64 * delta;
        if y.abs() > inner {
            continue;
        }
        let arg = if left[j] <= right[j] { left_arg[j] } else { right_arg[j] };
        if arg == 0 || arg == count - 1 {
            return Err(RbodeError::BoxTooSmall {
                y,
                minimizer: lo + arg as f64 * delta,
            });
        }
    }
    let env = Envelope {
        lo,
        delta,
        n,
        f,
        left,
        right,
    };
    Ok(Coefficient::new(
        move |y| sign * env.eval(y),
        GrowthClass::Lipschitz(n),
        coefficient.is_monotone(),
    ))
}
