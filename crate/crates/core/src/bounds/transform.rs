use std::fmt;
use std::sync::Arc;

use super::BoundsError;
use crate::rbode::{Coefficient, GrowthClass, ScalarFn};

/// Default scan step for `c0` and `p0`.
pub const DEFAULT_SCAN_STEP: f64 = 1e-5;

/// Superlinear `y`-growth `h` of a driver, with its exponent `γ`.
#[derive(Clone)]
pub struct SuperlinearGrowth {
    h: ScalarFn,
    gamma: f64,
}

impl fmt::Debug for SuperlinearGrowth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SuperlinearGrowth")
            .field("gamma", &self.gamma)
            .finish_non_exhaustive()
    }
}

impl SuperlinearGrowth {
    /// Validates `h(0) > 0`, monotonicity and midpoint convexity on a probe
    /// grid over `[0, 50/γ]`, and that `e^{−γy} h(y)` shows no growing tail.
    pub fn new(h: impl Fn(f64) -> f64 + Send + Sync + 'static, gamma: f64) -> Result<Self, BoundsError> {
        Self::from_arc(Arc::new(h), gamma)
    }

    pub fn from_arc(h: ScalarFn, gamma: f64) -> Result<Self, BoundsError> {
        if !(gamma > 0.0) {
            return Err(BoundsError::Assumption(format!("γ must be positive, got {gamma}")));
        }
        let h0 = h(0.0);
        if !(h0 > 0.0) {
            return Err(BoundsError::Assumption(format!("h(0) must be positive, got {h0}")));
        }
        const PROBES: usize = 2000;
        let top = 50.0 / gamma;
        let ys: Vec<f64> = (0..=PROBES).map(|k| top * k as f64 / PROBES as f64).collect();
        let hs: Vec<f64> = ys.iter().map(|&y| h(y)).collect();
        for k in 1..=PROBES {
            if hs[k] < hs[k - 1] - 1e-12 * hs[k - 1].abs() {
                return Err(BoundsError::Assumption(format!(
                    "h decreases between {} and {}",
                    ys[k - 1],
                    ys[k]
                )));
            }
            if k < PROBES {
                let chord = 0.5 * (hs[k - 1] + hs[k + 1]);
                if hs[k] > chord + 1e-10 * (1.0 + chord.abs()) {
                    return Err(BoundsError::Assumption(format!("h not convex at {}", ys[k])));
                }
            }
        }
        let damped: Vec<f64> = ys.iter().zip(&hs).map(|(&y, &v)| (-gamma * y).exp() * v).collect();
        let cut = PROBES * 9 / 10;
        let head = damped[..cut].iter().fold(0.0f64, |m, &v| m.max(v));
        let tail = &damped[cut..];
        let rising = tail.windows(2).all(|w| w[1] > w[0]);
        if !damped.iter().all(|v| v.is_finite()) || (rising && tail[tail.len() - 1] > head) {
            return Err(BoundsError::Integrability("e^{-γy} h(y) grows on [0, 50/γ]".into()));
        }
        Ok(Self { h, gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn h(&self, y: f64) -> f64 {
        (self.h)(y)
    }

    pub fn function(&self) -> ScalarFn {
        Arc::clone(&self.h)
    }
}

#[derive(Debug, Clone)]
pub enum Flavor {
    Linear {
        alpha: f64,
        beta: f64,
        gamma: f64,
    },
    Superlinear {
        growth: SuperlinearGrowth,
        c0: f64,
        p0: f64,
    },
}

/// The majorant `H` of the exponentially transformed driver.
#[derive(Debug, Clone)]
pub struct GrowthTransform {
    flavor: Flavor,
}

impl GrowthTransform {
    pub fn flavor(&self) -> &Flavor {
        &self.flavor
    }

    pub fn gamma(&self) -> f64 {
        match &self.flavor {
            Flavor::Linear { gamma, .. } => *gamma,
            Flavor::Superlinear { growth, .. } => growth.gamma,
        }
    }

    pub fn eval(&self, p: f64) -> f64 {
        match &self.flavor {
            Flavor::Linear { alpha, beta, gamma } => {
                if p >= 1.0 {
                    p * (alpha * gamma + beta * p.ln())
                } else {
                    gamma * alpha
                }
            }
            Flavor::Superlinear { growth, c0, p0 } => {
                if p >= *p0 {
                    growth.gamma * p * growth.h(p.ln() / growth.gamma)
                } else {
                    *c0
                }
            }
        }
    }

    /// `H` as a nondecreasing backward-ODE coefficient. The growth bound
    /// `1 + |H|` is declared superlinear.
    pub fn coefficient(&self) -> Coefficient {
        let this = self.clone();
        let eval: ScalarFn = Arc::new(move |p| this.eval(p));
        let e = Arc::clone(&eval);
        let l0: ScalarFn = Arc::new(move |p| 1.0 + e(p).abs());
        Coefficient::from_arc(eval, GrowthClass::Superlinear(l0), true)
    }
}

/// `H(p) = p(αγ + β ln p)` for `p ≥ 1`, `γα` below.
pub fn build_h_linear(alpha: f64, beta: f64, gamma: f64, strict: bool) -> Result<GrowthTransform, BoundsError> {
    if !(alpha >= 0.0 && beta >= 0.0 && gamma > 0.0) {
        return Err(BoundsError::Assumption(format!(
            "need α ≥ 0, β ≥ 0, γ > 0 (α = {alpha}, β = {beta}, γ = {gamma})"
        )));
    }
    if strict && alpha < beta / gamma {
        return Err(BoundsError::Assumption(format!("α = {alpha} < β/γ = {}", beta / gamma)));
    }
    Ok(GrowthTransform {
        flavor: Flavor::Linear { alpha, beta, gamma },
    })
}

/// `c0 = sup_{p∈(0,1)} γp h(−ln p/γ)` by a scan with step `dp` together with
/// the `p → 1` limit `γ h(0)`; `p0` by a forward scan from 1.
pub fn build_h_superlinear(growth: SuperlinearGrowth, dp: f64) -> Result<GrowthTransform, BoundsError> {
    if !(dp > 0.0 && dp < 0.5) {
        return Err(BoundsError::Assumption(format!(
            "scan step must lie in (0, 0.5), got {dp}"
        )));
    }
    let g = growth.gamma;
    let edge = g * growth.h(0.0);
    let steps = (1.0 / dp).ceil() as usize;
    let mut c0 = edge;
    let mut arg = steps;
    for k in 1..steps {
        let p = k as f64 * dp;
        if p >= 1.0 {
            break;
        }
        let v = g * p * growth.h(-p.ln() / g);
        if !v.is_finite() {
            return Err(BoundsError::Integrability(format!(
                "γph(−ln p/γ) not finite at p = {p}"
            )));
        }
        if v > c0 {
            c0 = v;
            arg = k;
        }
    }
    if arg == 1 {
        return Err(BoundsError::Integrability(format!(
            "sup of γph(−ln p/γ) over (0,1) at the smallest probe p = {dp}; unbounded as p → 0"
        )));
    }
    const MAX_SCAN: usize = 1_000_000_000;
    let mut p0 = None;
    for k in 0..MAX_SCAN {
        let p = 1.0 + k as f64 * dp;
        if g * p * growth.h(p.ln() / g) >= c0 {
            p0 = Some(p);
            break;
        }
    }
    let p0 = p0.ok_or_else(|| BoundsError::Integrability("p0 scan did not terminate".into()))?;
    Ok(GrowthTransform {
        flavor: Flavor::Superlinear { growth, c0, p0 },
    })
}
