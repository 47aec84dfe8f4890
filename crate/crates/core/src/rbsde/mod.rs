//! Discrete-time reflected BSDE solvers: binomial lattice, regression Monte
//! Carlo, the exponential transform, truncation, localization and the
//! `Z`-energy certificate.

mod driver;
mod energy;
mod lattice;
mod localization;
mod regression;
mod scenario;
mod transform;
mod truncation;

use thiserror::Error;

pub use driver::{Certificate, Driver, DriverFn};
pub use energy::{v_function, z_energy_certificate, EnergyCertificate, EnergyLevel};
pub use lattice::{
    build_lattice, solve_reflected_lattice, validate_on_lattice, DriverMode, Lattice, LatticeSolution, ProfileRow,
};
pub use localization::{localization_times, node_conditional_bounds, LocalizationLevel, LocalizationReport};
pub use regression::{solve_reflected_regression, RegressionSettings, RegressionSolution};
pub use scenario::{BarrierFn, EnvelopeFn, Scenario, StateFn};
pub use transform::{exponential_transform, from_transformed, to_transformed, transformed_scenario, TransformedValues};
pub use truncation::{truncate_terminal_sequence, TruncationReport};

use crate::bounds::BoundsError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RbsdeError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("assumption violated: {0}")]
    Assumption(String),
    #[error("fixed-point driver iteration did not converge at step {step}, node {node}; use a smaller dt")]
    Mode { step: usize, node: usize },
    #[error("non-finite value at step {step}, node {node}")]
    Overflow { step: usize, node: usize },
    #[error("rank-deficient regression at step {step}")]
    Basis { step: usize },
    #[error("invariant failure: {0}")]
    Invariant(String),
    #[error("energy certificate violated at level {level}: lhs {lhs} > rhs {rhs}")]
    Certificate { level: f64, lhs: f64, rhs: f64 },
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}

/// Output of either backend.
#[derive(Debug, Clone)]
pub enum RbsdeSolution {
    Lattice(LatticeSolution),
    Regression(RegressionSolution),
}

impl RbsdeSolution {
    pub fn backend(&self) -> &'static str {
        match self {
            RbsdeSolution::Lattice(_) => "lattice",
            RbsdeSolution::Regression(_) => "regression",
        }
    }

    pub fn y0(&self) -> f64 {
        match self {
            RbsdeSolution::Lattice(s) => s.y0(),
            RbsdeSolution::Regression(s) => s.y0,
        }
    }

    /// `(t, Y at the central node or mean Y, E[K_t], rms Z)` per step.
    pub fn profile(&self) -> Vec<ProfileRow> {
        match self {
            RbsdeSolution::Lattice(s) => s.profile(),
            RbsdeSolution::Regression(s) => s.profile(),
        }
    }
}
