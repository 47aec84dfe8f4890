use std::fmt;
use std::sync::Arc;

use super::{Driver, RbsdeError};
use crate::grid::{ScalarPath, TimeGrid};

/// Function of the state `B_t ∈ R^d`.
pub type StateFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Function of `(t, B_t)`.
pub type BarrierFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
/// Deterministic function of `t`.
pub type EnvelopeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Data `(ξ, f, L)` of a reflected BSDE driven by a `d`-dimensional Brownian
/// motion, with a deterministic envelope `|L_t| ≤ a_t`.
#[derive(Clone)]
pub struct Scenario {
    pub driver: Driver,
    pub terminal: StateFn,
    pub barrier: BarrierFn,
    pub envelope: EnvelopeFn,
    pub horizon: f64,
    pub dimension: usize,
}

impl fmt::Debug for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scenario")
            .field("driver", &self.driver)
            .field("horizon", &self.horizon)
            .field("dimension", &self.dimension)
            .finish_non_exhaustive()
    }
}

impl Scenario {
    pub fn new(
        driver: Driver,
        terminal: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        barrier: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
        envelope: impl Fn(f64) -> f64 + Send + Sync + 'static,
        horizon: f64,
        dimension: usize,
    ) -> Result<Self, RbsdeError> {
        Self::from_arcs(
            driver,
            Arc::new(terminal),
            Arc::new(barrier),
            Arc::new(envelope),
            horizon,
            dimension,
        )
    }

    pub fn from_arcs(
        driver: Driver,
        terminal: StateFn,
        barrier: BarrierFn,
        envelope: EnvelopeFn,
        horizon: f64,
        dimension: usize,
    ) -> Result<Self, RbsdeError> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(RbsdeError::InvalidScenario(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if dimension == 0 {
            return Err(RbsdeError::InvalidScenario("dimension must be at least 1".into()));
        }
        Ok(Self {
            driver,
            terminal,
            barrier,
            envelope,
            horizon,
            dimension,
        })
    }

    /// `ξ = B_T^1 + … + B_T^d`, constant barrier and envelope `|level|`.
    pub fn martingale(driver: Driver, level: f64, horizon: f64, dimension: usize) -> Result<Self, RbsdeError> {
        Self::new(
            driver,
            |b| b.iter().sum(),
            move |_, _| level,
            move |_| level.abs(),
            horizon,
            dimension,
        )
    }

    #[inline]
    pub fn xi(&self, state: &[f64]) -> f64 {
        (self.terminal)(state)
    }

    #[inline]
    pub fn l(&self, t: f64, state: &[f64]) -> f64 {
        (self.barrier)(t, state)
    }

    #[inline]
    pub fn a(&self, t: f64) -> f64 {
        (self.envelope)(t)
    }

    pub fn envelope_path(&self, grid: &TimeGrid) -> ScalarPath {
        ScalarPath::from_fn(grid, |t| self.a(t))
    }

    pub fn with_terminal(&self, terminal: StateFn) -> Self {
        Self {
            terminal,
            ..self.clone()
        }
    }

    pub fn with_barrier(&self, barrier: BarrierFn) -> Self {
        Self {
            barrier,
            ..self.clone()
        }
    }

    pub fn with_driver(&self, driver: Driver) -> Self {
        Self { driver, ..self.clone() }
    }

    /// `ξ ∧ n`.
    pub fn truncated(&self, n: f64) -> Self {
        let xi = Arc::clone(&self.terminal);
        self.with_terminal(Arc::new(move |b| xi(b).min(n)))
    }

    /// `|L(t, s)| ≤ a_t` and, at the horizon, `L(T, s) ≤ ξ(s)`.
    pub fn check_state(&self, t: f64, state: &[f64], at_horizon: bool) -> Result<(), RbsdeError> {
        let l = self.l(t, state);
        let a = self.a(t);
        if !l.is_finite() || l.abs() > a + 1e-12 * (1.0 + a.abs()) {
            return Err(RbsdeError::Assumption(format!(
                "|L| ≤ a fails at t = {t}, state = {state:?}: L = {l}, a = {a}"
            )));
        }
        if at_horizon {
            let xi = self.xi(state);
            if !xi.is_finite() || l > xi {
                return Err(RbsdeError::Assumption(format!(
                    "L_T ≤ ξ fails at state = {state:?}: L = {l}, ξ = {xi}"
                )));
            }
        }
        Ok(())
    }
}
