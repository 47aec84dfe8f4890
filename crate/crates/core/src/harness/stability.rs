use super::HarnessError;
use crate::rbsde::{solve_reflected_lattice, DriverMode, Lattice, LatticeSolution, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityDirection {
    /// Data increase in `p`: `Y^p` nondecreasing, `K^p` nonincreasing.
    Increasing,
    /// Data decrease in `p`: `Y^p` nonincreasing, `K^p` nondecreasing.
    Decreasing,
}

/// Scenarios indexed by `p`, the limit scenario last, sharing a barrier
/// bounded by `bound`.
#[derive(Debug, Clone)]
pub struct StabilityFamily {
    pub scenarios: Vec<Scenario>,
    pub direction: StabilityDirection,
    pub bound: f64,
}

impl StabilityFamily {
    /// Checks `|ξ^p| ≤ b` at the terminal nodes and `|L| ≤ b` at every node.
    pub fn new(
        scenarios: Vec<Scenario>,
        direction: StabilityDirection,
        bound: f64,
        lattice: &Lattice,
    ) -> Result<Self, HarnessError> {
        if scenarios.len() < 2 {
            return Err(HarnessError::InvalidInput(
                "a stability family needs at least two members".into(),
            ));
        }
        let n = lattice.steps();
        let tol = 1e-12 * (1.0 + bound);
        for (p, s) in scenarios.iter().enumerate() {
            for i in 0..=n {
                for j in 0..=i {
                    let b = [lattice.node(i, j)];
                    let l = s.l(lattice.time(i), &b);
                    if l.abs() > bound + tol {
                        return Err(HarnessError::InvalidInput(format!(
                            "|L| = {} exceeds b = {bound} for member {p} at step {i}, node {j}",
                            l.abs()
                        )));
                    }
                    if i == n && s.xi(&b).abs() > bound + tol {
                        return Err(HarnessError::InvalidInput(format!(
                            "|ξ| = {} exceeds b = {bound} for member {p} at node {j}",
                            s.xi(&b).abs()
                        )));
                    }
                }
            }
        }
        Ok(Self {
            scenarios,
            direction,
            bound,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub y0: Vec<f64>,
    /// `sup |Y^p − Y^limit|` per member.
    pub gaps_to_limit: Vec<f64>,
}

fn sup_gap(a: &LatticeSolution, b: &LatticeSolution) -> f64 {
    a.y.iter()
        .flatten()
        .zip(b.y.iter().flatten())
        .fold(0.0, |m, (u, v)| m.max((u - v).abs()))
}

/// Solves every member and checks node-wise monotonicity of `Y^p` and
/// opposite monotonicity of `ΔK^p` (which gives it for `K^p` along every
/// path), then that the gaps to the limit do not increase.
pub fn monotone_stability_check(family: &StabilityFamily, lattice: &Lattice) -> Result<StabilityReport, HarnessError> {
    let solutions: Vec<LatticeSolution> = family
        .scenarios
        .iter()
        .map(|s| solve_reflected_lattice(s, lattice, DriverMode::default_for(&s.driver)))
        .collect::<Result<_, _>>()?;
    let sign = match family.direction {
        StabilityDirection::Increasing => 1.0,
        StabilityDirection::Decreasing => -1.0,
    };
    let n = lattice.steps();
    for (p, w) in solutions.windows(2).enumerate() {
        let scale = 1.0
            + w.iter()
                .flat_map(|s| s.y.iter().flatten())
                .fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = 1e-12 * scale;
        for i in 0..=n {
            for j in 0..=i {
                if sign * (w[1].y[i][j] - w[0].y[i][j]) < -tol {
                    return Err(HarnessError::Monotonicity {
                        quantity: "Y",
                        index: p + 1,
                        step: i,
                        node: j,
                    });
                }
                if i < n && sign * (w[0].dk[i][j] - w[1].dk[i][j]) < -tol {
                    return Err(HarnessError::Monotonicity {
                        quantity: "K",
                        index: p + 1,
                        step: i,
                        node: j,
                    });
                }
            }
        }
    }
    let limit = solutions.last().expect("nonempty family");
    let gaps: Vec<f64> = solutions.iter().map(|s| sup_gap(s, limit)).collect();
    let scale = 1.0 + limit.y.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(p) = gaps.windows(2).position(|w| w[1] > w[0] + 1e-12 * scale) {
        return Err(HarnessError::Monotonicity {
            quantity: "gap to limit",
            index: p + 1,
            step: 0,
            node: 0,
        });
    }
    Ok(StabilityReport {
        y0: solutions.iter().map(|s| s.y0()).collect(),
        gaps_to_limit: gaps,
    })
}
