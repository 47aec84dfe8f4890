use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::RbsdeError;
use crate::bounds::{build_h_linear, build_h_superlinear, GrowthTransform, SuperlinearGrowth, DEFAULT_SCAN_STEP};

/// `f(t, y, z)` with `z ∈ R^d`.
pub type DriverFn = Arc<dyn Fn(f64, f64, &[f64]) -> f64 + Send + Sync>;

/// Growth certificate of a driver.
#[derive(Debug, Clone)]
pub enum Certificate {
    /// `|f| ≤ α + β|y| + (γ/2)|z|²`.
    Linear { alpha: f64, beta: f64, gamma: f64 },
    /// `|f| ≤ h(|y|) + (γ/2)|z|²`.
    Superlinear(SuperlinearGrowth),
    /// Transformed driver bounded above by `H(p)`.
    Majorized(GrowthTransform),
}

impl Certificate {
    pub fn gamma(&self) -> f64 {
        match self {
            Certificate::Linear { gamma, .. } => *gamma,
            Certificate::Superlinear(g) => g.gamma(),
            Certificate::Majorized(h) => h.gamma(),
        }
    }

    /// `H` for the certificate: the linear or superlinear construction.
    pub fn growth_transform(&self, strict: bool) -> Result<GrowthTransform, RbsdeError> {
        Ok(match self {
            Certificate::Linear { alpha, beta, gamma } => build_h_linear(*alpha, *beta, *gamma, strict)?,
            Certificate::Superlinear(g) => build_h_superlinear(g.clone(), DEFAULT_SCAN_STEP)?,
            Certificate::Majorized(h) => h.clone(),
        })
    }

    fn name(&self) -> &'static str {
        match self {
            Certificate::Linear { .. } => "linear",
            Certificate::Superlinear(_) => "superlinear",
            Certificate::Majorized(_) => "majorized",
        }
    }
}

/// Driver `f` of a reflected BSDE with its certificate and an optional
/// Lipschitz constant in `(y, z)`.
#[derive(Clone)]
pub struct Driver {
    f: DriverFn,
    certificate: Certificate,
    lipschitz: Option<f64>,
}

impl fmt::Debug for Driver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Driver")
            .field("certificate", &self.certificate)
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

impl Driver {
    pub fn new(
        f: impl Fn(f64, f64, &[f64]) -> f64 + Send + Sync + 'static,
        certificate: Certificate,
        lipschitz: Option<f64>,
    ) -> Self {
        Self {
            f: Arc::new(f),
            certificate,
            lipschitz,
        }
    }

    pub fn from_arc(f: DriverFn, certificate: Certificate, lipschitz: Option<f64>) -> Self {
        Self {
            f,
            certificate,
            lipschitz,
        }
    }

    /// `f ≡ 0` with certificate `(0, 0, γ)`.
    pub fn zero(gamma: f64) -> Self {
        Self::new(
            |_, _, _| 0.0,
            Certificate::Linear {
                alpha: 0.0,
                beta: 0.0,
                gamma,
            },
            Some(0.0),
        )
    }

    /// `f ≡ c`.
    pub fn constant(c: f64, gamma: f64) -> Self {
        Self::new(
            move |_, _, _| c,
            Certificate::Linear {
                alpha: c.abs(),
                beta: 0.0,
                gamma,
            },
            Some(0.0),
        )
    }

    /// `f = (γ/2)|z|²`.
    pub fn quadratic_z(gamma: f64) -> Self {
        Self::new(
            move |_, _, z| 0.5 * gamma * z.iter().map(|v| v * v).sum::<f64>(),
            Certificate::Linear {
                alpha: 0.0,
                beta: 0.0,
                gamma,
            },
            None,
        )
    }

    /// `f = a + b y + c Σz`, certified with the smallest `α` for the given
    /// `γ`: `(γ/2)z² − |c||z|` has minimum `−c²/(2γ)` per coordinate.
    pub fn affine(a: f64, b: f64, c: f64, gamma: f64, dimension: usize) -> Self {
        let alpha = a.abs() + dimension as f64 * c * c / (2.0 * gamma);
        Self::new(
            move |_, y, z| a + b * y + c * z.iter().sum::<f64>(),
            Certificate::Linear {
                alpha,
                beta: b.abs(),
                gamma,
            },
            Some(b.abs() + c.abs() * (dimension as f64).sqrt()),
        )
    }

    #[inline]
    pub fn eval(&self, t: f64, y: f64, z: &[f64]) -> f64 {
        (self.f)(t, y, z)
    }

    pub fn function(&self) -> DriverFn {
        Arc::clone(&self.f)
    }

    pub fn certificate(&self) -> &Certificate {
        &self.certificate
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn with_lipschitz(mut self, lipschitz: Option<f64>) -> Self {
        self.lipschitz = lipschitz;
        self
    }

    /// Probes the growth certificate, the Lipschitz flag and continuity on
    /// `probes` random points of `[0, horizon] × [−range, range]^{1+d}`.
    pub fn spot_check(
        &self,
        seed: u64,
        probes: usize,
        range: f64,
        horizon: f64,
        dimension: usize,
    ) -> Result<(), RbsdeError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gamma = self.certificate.gamma();
        for _ in 0..probes {
            let t = rng.random_range(0.0..=horizon);
            let y: f64 = rng.random_range(-range..=range);
            let z: Vec<f64> = (0..dimension).map(|_| rng.random_range(-range..=range)).collect();
            let v = self.eval(t, y, &z);
            if !v.is_finite() {
                return Err(RbsdeError::Assumption(format!("driver not finite at t = {t}, y = {y}")));
            }
            let z2: f64 = z.iter().map(|q| q * q).sum();
            let ok = match &self.certificate {
                Certificate::Linear { alpha, beta, gamma } => {
                    v.abs() <= (alpha + beta * y.abs() + 0.5 * gamma * z2) * (1.0 + 1e-12) + 1e-12
                }
                Certificate::Superlinear(g) => v.abs() <= (g.h(y.abs()) + 0.5 * gamma * z2) * (1.0 + 1e-12) + 1e-12,
                Certificate::Majorized(h) => {
                    // y plays the role of p on (0, range]
                    let p = y.abs().max(1e-6);
                    let fv = self.eval(t, p, &z);
                    fv <= h.eval(p) * (1.0 + 1e-12) + 1e-12
                }
            };
            if !ok {
                return Err(RbsdeError::Assumption(format!(
                    "{} growth certificate violated at t = {t}, y = {y}, z = {z:?}",
                    self.certificate.name()
                )));
            }
            if let Some(mu) = self.lipschitz {
                let y2: f64 = rng.random_range(-range..=range);
                let w: Vec<f64> = (0..dimension).map(|_| rng.random_range(-range..=range)).collect();
                let dist = (y - y2).abs() + z.iter().zip(&w).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                if (v - self.eval(t, y2, &w)).abs() > mu * dist * (1.0 + 1e-9) + 1e-12 {
                    return Err(RbsdeError::Assumption(format!(
                        "Lipschitz constant {mu} violated near y = {y}"
                    )));
                }
            }
            let eps = 1e-9;
            let shifted: Vec<f64> = z.iter().map(|q| q + eps).collect();
            let jump = (self.eval(t, y + eps, &shifted) - v).abs();
            if jump > 1e-4 * (1.0 + v.abs()) {
                return Err(RbsdeError::Assumption(format!(
                    "driver looks discontinuous at t = {t}, y = {y}"
                )));
            }
        }
        Ok(())
    }
}
