use super::{solve_reflected_lattice, DriverMode, Lattice, LatticeSolution, RbsdeError, Scenario};

/// Per-level summary of a terminal-truncation sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationReport {
    pub levels: Vec<f64>,
    pub y0: Vec<f64>,
    /// `sup |Y^{n_{k+1}} − Y^{n_k}|` over all nodes.
    pub gaps: Vec<f64>,
    /// `sup |Y^{n_last} − Y^{n_k}|`.
    pub gaps_to_last: Vec<f64>,
    /// First level whose solution is bit-identical to the last one.
    pub saturated_from: Option<usize>,
}

fn sup_gap(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs()))
        .fold(0.0, f64::max)
}

/// Solves with `ξ ∧ n` for each level and checks that `Y` is nondecreasing
/// and `ΔK` nonincreasing in `n` at every node (so `K` is pathwise
/// nonincreasing).
pub fn truncate_terminal_sequence(
    scenario: &Scenario,
    lattice: &Lattice,
    levels: &[f64],
    mode: DriverMode,
) -> Result<(Vec<LatticeSolution>, TruncationReport), RbsdeError> {
    if levels.is_empty() || levels.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(RbsdeError::InvalidScenario(
            "truncation levels must be increasing".into(),
        ));
    }
    let a_t = scenario.a(scenario.horizon);
    if let Some(&n) = levels.iter().find(|&&n| n < a_t) {
        return Err(RbsdeError::InvalidScenario(format!("level {n} below a_T = {a_t}")));
    }
    let solutions: Vec<LatticeSolution> = levels
        .iter()
        .map(|&n| solve_reflected_lattice(&scenario.truncated(n), lattice, mode))
        .collect::<Result<_, _>>()?;
    for (k, w) in solutions.windows(2).enumerate() {
        let (lo, hi) = (&w[0], &w[1]);
        let scale = 1.0 + hi.y.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = 1e-12 * scale;
        for i in 0..=lattice.steps() {
            for j in 0..=i {
                if lo.y[i][j] > hi.y[i][j] + tol {
                    return Err(RbsdeError::Invariant(format!(
                        "Y decreases from level {} to {} at step {i}, node {j}",
                        levels[k],
                        levels[k + 1]
                    )));
                }
                if i < lattice.steps() && lo.dk[i][j] < hi.dk[i][j] - tol {
                    return Err(RbsdeError::Invariant(format!(
                        "ΔK increases from level {} to {} at step {i}, node {j}",
                        levels[k],
                        levels[k + 1]
                    )));
                }
            }
        }
    }
    let last = solutions.last().expect("nonempty");
    let report = TruncationReport {
        levels: levels.to_vec(),
        y0: solutions.iter().map(|s| s.y0()).collect(),
        gaps: solutions.windows(2).map(|w| sup_gap(&w[0].y, &w[1].y)).collect(),
        gaps_to_last: solutions.iter().map(|s| sup_gap(&s.y, &last.y)).collect(),
        saturated_from: solutions.iter().position(|s| s.y == last.y && s.dk == last.dk),
    };
    Ok((solutions, report))
}
