//! Independent oracles and property suites: trajectory comparison, monotone
//! stability, the Snell-envelope oracle, the brute-force RBODE oracle and
//! Skorokhod residual reporting.

mod comparison;
mod oracles;
mod stability;

use thiserror::Error;

pub use comparison::{
    comparison_campaign, comparison_suite, random_ordered_pair, CampaignReport, ComparisonVerdict, DriverClass,
    OrderedScenarioPair, OrderingCertificate,
};
pub use oracles::{oracle_rbode_bruteforce, oracle_snell};
pub use stability::{monotone_stability_check, StabilityDirection, StabilityFamily, StabilityReport};

use crate::grid::ScalarPath;
use crate::rbode::{RbodeError, RbodeSolution};
use crate::rbsde::{LatticeSolution, RbsdeError, RegressionSolution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("ordering certificate failed: {0}")]
    Certificate(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{quantity} not monotone at family index {index}, step {step}, node {node}")]
    Monotonicity {
        quantity: &'static str,
        index: usize,
        step: usize,
        node: usize,
    },
    #[error(transparent)]
    Rbsde(#[from] RbsdeError),
    #[error(transparent)]
    Rbode(#[from] RbodeError),
}

/// A solution whose Skorokhod residual `Σ (Y − L) ΔK` can be reported.
pub enum SkorokhodInput<'a> {
    Lattice(&'a LatticeSolution),
    Regression(&'a RegressionSolution),
    Rbode(&'a RbodeSolution, &'a ScalarPath),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkorokhodReport {
    pub residual: f64,
    /// Monte Carlo standard error of the residual, when it is an estimate.
    pub standard_error: Option<f64>,
}

impl SkorokhodReport {
    /// Exactly zero for exact backends, within three standard errors for
    /// sampled ones.
    pub fn pass(&self) -> bool {
        match self.standard_error {
            None => self.residual == 0.0,
            Some(se) => self.residual.abs() <= 3.0 * se,
        }
    }
}

/// Probability-weighted `Σ (Y − L) ΔK`; a plain grid sum for RBODE solutions.
pub fn skorokhod_residual(input: SkorokhodInput<'_>) -> SkorokhodReport {
    match input {
        SkorokhodInput::Lattice(s) => SkorokhodReport {
            residual: s.skorokhod_residual(),
            standard_error: None,
        },
        SkorokhodInput::Regression(s) => SkorokhodReport {
            residual: s.skorokhod,
            standard_error: Some(s.skorokhod_se),
        },
        SkorokhodInput::Rbode(s, barrier) => {
            let y = s.y.values();
            let k = s.k.values();
            let l = barrier.values();
            let residual = (0..y.len() - 1).map(|i| (y[i] - l[i]) * (k[i + 1] - k[i])).sum();
            SkorokhodReport {
                residual,
                standard_error: None,
            }
        }
    }
}
