//! A-priori bound calculus: the majorant `H`, the θ mapping and the bound
//! `Y_t ≤ (1/γ) ln E[θ_t(ξ ∨ a_T) | F_t]`.

mod theta;
mod transform;

use thiserror::Error;

pub use theta::{
    a_priori_bound, integrability_check, linear_theta_log, solve_theta, validate_distribution, ThetaFamily,
    ThetaSolution, THETA_MAX_MESH,
};
pub use transform::{
    build_h_linear, build_h_superlinear, Flavor, GrowthTransform, SuperlinearGrowth, DEFAULT_SCAN_STEP,
};

use crate::rbode::RbodeError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("assumption violated: {0}")]
    Assumption(String),
    #[error("integrability violated: {0}")]
    Integrability(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("terminal {x} outside the solved range [{lo}, {hi}]")]
    OutOfRange { x: f64, lo: f64, hi: f64 },
    #[error("invariant failure: {0}")]
    Invariant(String),
    #[error(transparent)]
    Rbode(#[from] RbodeError),
}
