use rayon::prelude::*;

use super::{Lattice, RbsdeError, Scenario};
use crate::bounds::ThetaFamily;

/// `(1/γ) ln E[θ_{t_i}(ξ ∨ a_T) | node (i, j)]` at every lattice node.
///
/// The conditional law of the terminal node from `(i, j)` is
/// `j + Binomial(N − i, 1/2)`; the sum is taken in log-sum-exp form with
/// log-binomial weights from a log-factorial table.
pub fn node_conditional_bounds(
    scenario: &Scenario,
    lattice: &Lattice,
    family: &ThetaFamily,
) -> Result<Vec<Vec<f64>>, RbsdeError> {
    let n = lattice.steps();
    if family.grid().len() != n + 1 {
        return Err(RbsdeError::InvalidScenario(format!(
            "θ family has {} time points, lattice has {}",
            family.grid().len(),
            n + 1
        )));
    }
    let a_t = scenario.a(scenario.horizon);
    let terminal: Vec<f64> = (0..=n).map(|k| scenario.xi(&[lattice.node(n, k)]).max(a_t)).collect();
    let mut log_fact = vec![0.0f64; n + 1];
    for k in 1..=n {
        log_fact[k] = log_fact[k - 1] + (k as f64).ln();
    }
    let gamma = family.gamma();
    (0..=n)
        .into_par_iter()
        .map(|i| {
            let m = n - i;
            let log_theta: Vec<f64> = terminal
                .iter()
                .map(|&x| family.log_theta(i, x))
                .collect::<Result<_, _>>()?;
            let log_w: Vec<f64> = (0..=m)
                .map(|u| log_fact[m] - log_fact[u] - log_fact[m - u] - m as f64 * std::f64::consts::LN_2)
                .collect();
            Ok((0..=i)
                .map(|j| {
                    let terms = (0..=m).map(|u| log_w[u] + log_theta[j + u]);
                    let top = terms.clone().fold(f64::NEG_INFINITY, f64::max);
                    let sum: f64 = terms.map(|v| (v - top).exp()).sum();
                    (top + sum.ln()) / gamma
                })
                .collect())
        })
        .collect::<Result<_, RbsdeError>>()
}

/// Hitting diagnostics of `τ_m = inf{t : bound_t ≥ m} ∧ T` for one level.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationLevel {
    pub m: f64,
    /// Exact `P(τ_m < T)` under the lattice measure.
    pub hit_probability: f64,
    /// Smallest step at which some node reaches `m`, if any before `N`.
    pub earliest_step: Option<usize>,
    /// `reached[i][j]` is `bound(i, j) ≥ m`.
    reached: Vec<Vec<bool>>,
}

impl LocalizationLevel {
    /// `τ_m` along a lattice path given by its node index at each step.
    pub fn tau_along(&self, path: &[usize]) -> usize {
        let n = self.reached.len() - 1;
        (0..n).find(|&i| self.reached[i][path[i]]).unwrap_or(n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationReport {
    pub levels: Vec<LocalizationLevel>,
}

impl LocalizationReport {
    /// Hitting probabilities nonincreasing along increasing `m`.
    pub fn is_monotone(&self) -> bool {
        let mut sorted: Vec<&LocalizationLevel> = self.levels.iter().collect();
        sorted.sort_by(|a, b| a.m.total_cmp(&b.m));
        sorted
            .windows(2)
            .all(|w| w[1].hit_probability <= w[0].hit_probability + 1e-15)
    }
}

/// `τ_m` diagnostics for every level in `m_levels`.
pub fn localization_times(bounds: &[Vec<f64>], m_levels: &[f64]) -> LocalizationReport {
    let n = bounds.len() - 1;
    let levels = m_levels
        .iter()
        .map(|&m| {
            let reached: Vec<Vec<bool>> = bounds.iter().map(|row| row.iter().map(|&b| b >= m).collect()).collect();
            // mass of paths that have not reached m strictly before T
            let mut alive = vec![1.0f64];
            let mut hit = 0.0;
            let mut earliest = None;
            for (i, row) in reached.iter().enumerate().take(n) {
                for (j, &r) in row.iter().enumerate() {
                    if r {
                        earliest.get_or_insert(i);
                        hit += alive[j];
                        alive[j] = 0.0;
                    }
                }
                alive = (0..=i + 1)
                    .map(|j| {
                        let down = if j <= i { alive[j] } else { 0.0 };
                        let up = if j >= 1 { alive[j - 1] } else { 0.0 };
                        0.5 * (down + up)
                    })
                    .collect();
            }
            LocalizationLevel {
                m,
                hit_probability: hit,
                earliest_step: earliest,
                reached,
            }
        })
        .collect();
    LocalizationReport { levels }
}
