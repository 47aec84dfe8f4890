//! Superlinear coefficients: growth envelope and the `ρ`-truncation.

use std::sync::Arc;

use super::{ode, Coefficient, GrowthClass, RbodeError, RbodeProblem, ScalarFn};
use crate::grid::{ScalarPath, TimeGrid};

/// Solves `v_t = b + ∫_t^T l0(v_s) ds` on the whole grid.
pub fn growth_envelope(l0: &ScalarFn, b: f64, grid: &TimeGrid) -> Result<ScalarPath, RbodeError> {
    let coef = Coefficient::from_arc(Arc::clone(l0), GrowthClass::Superlinear(Arc::clone(l0)), true);
    match ode::solve_backward_ode(&coef, b, grid, 0..=grid.last()) {
        Ok(sol) => Ok(ScalarPath::new(sol.values)),
        Err(RbodeError::Overflow { time }) => Err(RbodeError::EnvelopeBlowup { time }),
        Err(e) => Err(e),
    }
}

/// Data of the truncation argument for a superlinear coefficient.
#[derive(Debug, Clone)]
pub struct TruncationPlan {
    pub r: f64,
    pub big_r: f64,
    pub b: f64,
    pub envelope: ScalarPath,
    pub m_lower: f64,
}

impl TruncationPlan {
    /// `m̲ = inf l`, `b = x ∨ sup l`, `v` from [`growth_envelope`],
    /// `r = m̲ / 2`, `R = 2 v_0`.
    pub fn build(problem: &RbodeProblem, l0: &ScalarFn) -> Result<Self, RbodeError> {
        let m_lower = problem.barrier.inf();
        if !(m_lower > 0.0) {
            return Err(RbodeError::Regime(format!(
                "superlinear method needs inf l > 0, got {m_lower}"
            )));
        }
        let b = problem.terminal.max(problem.barrier.sup());
        let envelope = growth_envelope(l0, b, &problem.grid)?;
        let v0 = envelope.first();
        let plan = Self {
            r: 0.5 * m_lower,
            big_r: 2.0 * v0,
            b,
            envelope,
            m_lower,
        };
        debug_assert!(plan.r < plan.m_lower && plan.big_r > v0);
        Ok(plan)
    }

    /// Smooth clamp: `r/2` below `r/2`, identity on `[r, R]`, `2R` above `2R`,
    /// cubic Hermite blends in between.
    pub fn rho(&self, y: f64) -> f64 {
        rho(self.r, self.big_r, y)
    }
}

pub(crate) fn rho(r: f64, big_r: f64, y: f64) -> f64 {
    let lo = 0.5 * r;
    let hi = 2.0 * big_r;
    if y <= lo {
        lo
    } else if y < r {
        // slopes 0 at r/2 and 1 at r
        hermite(lo, r, lo, r, 0.0, 1.0, y)
    } else if y <= big_r {
        y
    } else if y < hi {
        // slopes 1 at R and 0 at 2R
        hermite(big_r, hi, big_r, hi, 1.0, 0.0, y)
    } else {
        hi
    }
}

fn hermite(a: f64, b: f64, fa: f64, fb: f64, da: f64, db: f64, x: f64) -> f64 {
    let w = b - a;
    let s = (x - a) / w;
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * fa + (s3 - 2.0 * s2 + s) * w * da + (-2.0 * s3 + 3.0 * s2) * fb + (s3 - s2) * w * db
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_envelope() {
        let g = TimeGrid::uniform(1.0, 20).unwrap();
        let l0: ScalarFn = Arc::new(|_| 0.5);
        let v = growth_envelope(&l0, 1.0, &g).unwrap();
        for (i, &t) in g.points().iter().enumerate() {
            assert!((v[i] - (1.0 + 0.5 * (1.0 - t))).abs() < 1e-13);
        }
        assert!((v.first() - 1.5).abs() < 1e-13);
    }

    #[test]
    fn linear_envelope_closed_form() {
        let g = TimeGrid::uniform(1.0, 200).unwrap();
        let l0: ScalarFn = Arc::new(|y| 1.0 + y);
        let v = growth_envelope(&l0, 1.0, &g).unwrap();
        // v_t = 2 e^{1-t} - 1
        assert!((v.first() - (2.0 * std::f64::consts::E - 1.0)).abs() < 1e-9);
        let v = growth_envelope(&l0, 0.0, &g).unwrap();
        assert!((v.first() - (std::f64::consts::E - 1.0)).abs() < 1e-9);
    }

    #[test]
    fn blowup_is_reported() {
        let g = TimeGrid::uniform(1.0, 50).unwrap();
        let l0: ScalarFn = Arc::new(|y: f64| 1.0 + y.exp());
        assert!(matches!(
            growth_envelope(&l0, 600.0, &g),
            Err(RbodeError::EnvelopeBlowup { .. })
        ));
    }

    #[test]
    fn rho_shape() {
        let (r, big) = (0.4, 3.0);
        assert_eq!(rho(r, big, 0.0), 0.2);
        assert_eq!(rho(r, big, 1.7), 1.7);
        assert_eq!(rho(r, big, 7.0), 6.0);
        let mut prev = rho(r, big, 0.1);
        for j in 1..1000 {
            let y = 0.1 + j as f64 * 0.007;
            let v = rho(r, big, y);
            assert!(v >= prev - 1e-15, "nondecreasing at {y}");
            prev = v;
        }
        // continuity at the blend ends
        assert!((rho(r, big, r - 1e-9) - r).abs() < 1e-8);
        assert!((rho(r, big, 2.0 * big - 1e-9) - 2.0 * big).abs() < 1e-8);
    }
}
