use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::RbodeError;

/// Shared real function of one variable.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Growth certificate attached to a coefficient.
#[derive(Clone)]
pub enum GrowthClass {
    /// `|φ(y) − φ(y')| ≤ μ |y − y'|`.
    Lipschitz(f64),
    /// `|φ(y)| ≤ μ_l (1 + |y|)`.
    Linear(f64),
    /// `|φ(y)| ≤ l0(y)` with `l0 > 0` and `∫ dy / l0 = ∞` (declared, not verified).
    Superlinear(ScalarFn),
}

impl fmt::Debug for GrowthClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GrowthClass::Lipschitz(mu) => write!(f, "Lipschitz({mu})"),
            GrowthClass::Linear(mu) => write!(f, "Linear({mu})"),
            GrowthClass::Superlinear(_) => write!(f, "Superlinear(l0)"),
        }
    }
}

impl GrowthClass {
    pub fn name(&self) -> &'static str {
        match self {
            GrowthClass::Lipschitz(_) => "lipschitz",
            GrowthClass::Linear(_) => "linear",
            GrowthClass::Superlinear(_) => "superlinear",
        }
    }
}

/// Time-independent coefficient `φ(y)` of a backward ODE.
#[derive(Clone)]
pub struct Coefficient {
    eval: ScalarFn,
    growth: GrowthClass,
    monotone: bool,
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Coefficient")
            .field("growth", &self.growth)
            .field("monotone", &self.monotone)
            .finish_non_exhaustive()
    }
}

impl Coefficient {
    pub fn new(eval: impl Fn(f64) -> f64 + Send + Sync + 'static, growth: GrowthClass, monotone: bool) -> Self {
        Self {
            eval: Arc::new(eval),
            growth,
            monotone,
        }
    }

    pub fn from_arc(eval: ScalarFn, growth: GrowthClass, monotone: bool) -> Self {
        Self { eval, growth, monotone }
    }

    /// `φ ≡ 0`.
    pub fn zero() -> Self {
        Self::new(|_| 0.0, GrowthClass::Lipschitz(0.0), true)
    }

    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        (self.eval)(y)
    }

    pub fn function(&self) -> ScalarFn {
        Arc::clone(&self.eval)
    }

    pub fn growth(&self) -> &GrowthClass {
        &self.growth
    }

    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    /// Probes the growth certificate (and the monotone flag, when set) on
    /// `probes` random pairs drawn uniformly from `[-range, range]`.
    pub fn spot_check(&self, seed: u64, probes: usize, range: f64) -> Result<(), RbodeError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..probes {
            let a: f64 = rng.random_range(-range..=range);
            let b: f64 = rng.random_range(-range..=range);
            let (fa, fb) = (self.eval(a), self.eval(b));
            let ok = match &self.growth {
                GrowthClass::Lipschitz(mu) => (fa - fb).abs() <= mu * (a - b).abs() * (1.0 + 1e-9) + 1e-12,
                GrowthClass::Linear(mu) => fa.abs() <= mu * (1.0 + a.abs()) * (1.0 + 1e-12),
                GrowthClass::Superlinear(l0) => {
                    let bound = l0(a);
                    bound > 0.0 && fa.abs() <= bound * (1.0 + 1e-12)
                }
            };
            if !ok {
                return Err(RbodeError::GrowthViolation {
                    class: self.growth.name(),
                    y: a,
                });
            }
            if self.monotone {
                let (lo, hi, flo, fhi) = if a <= b { (a, b, fa, fb) } else { (b, a, fb, fa) };
                if flo > fhi + 1e-12 * (1.0 + flo.abs()) {
                    return Err(RbodeError::MonotoneViolation { lo, hi });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_is_one_lipschitz() {
        let c = Coefficient::new(f64::sin, GrowthClass::Lipschitz(1.0), false);
        c.spot_check(1, 500, 10.0).unwrap();
    }

    #[test]
    fn detects_wrong_lipschitz_constant() {
        let c = Coefficient::new(|y| 3.0 * y, GrowthClass::Lipschitz(1.0), true);
        assert!(matches!(
            c.spot_check(2, 100, 5.0),
            Err(RbodeError::GrowthViolation { .. })
        ));
    }

    #[test]
    fn detects_false_monotone_flag() {
        let c = Coefficient::new(|y| -y, GrowthClass::Linear(1.0), true);
        assert!(matches!(
            c.spot_check(3, 100, 5.0),
            Err(RbodeError::MonotoneViolation { .. })
        ));
    }

    #[test]
    fn superlinear_bound_must_be_positive() {
        let c = Coefficient::new(
            |y: f64| y.abs().sqrt(),
            GrowthClass::Superlinear(Arc::new(|_| 0.0)),
            false,
        );
        assert!(c.spot_check(4, 10, 1.0).is_err());
    }
}
