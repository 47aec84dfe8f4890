use super::HarnessError;
use crate::rbode::{self, solve_rbode, Method, Quadrature, RbodeProblem, RbodeSolution};
use crate::rbsde::Lattice;

/// Classical optimal-stopping backward induction on the lattice:
/// `V(N) = payoff(N)`, `V(i) = max(payoff(i), mean of successors)`.
pub fn oracle_snell(lattice: &Lattice, payoff: impl Fn(usize, usize) -> f64) -> Vec<Vec<f64>> {
    let n = lattice.steps();
    let mut v: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
    v[n] = (0..=n).map(|j| payoff(n, j)).collect();
    for i in (0..n).rev() {
        v[i] = (0..=i)
            .map(|j| payoff(i, j).max(0.5 * (v[i + 1][j] + v[i + 1][j + 1])))
            .collect();
    }
    v
}

/// Solves the explicit sup over unreflected solves on the grid refined by
/// `fine_factor` (barrier interpolated linearly) and restricts back.
pub fn oracle_rbode_bruteforce(problem: &RbodeProblem, fine_factor: usize) -> Result<RbodeSolution, HarnessError> {
    if fine_factor < 2 {
        return Err(HarnessError::InvalidInput(format!(
            "fine_factor must be ≥ 2, got {fine_factor}"
        )));
    }
    let fine_grid = problem
        .grid
        .refine(fine_factor)
        .map_err(|e| HarnessError::Rbode(e.into()))?;
    let fine = RbodeProblem::new(
        fine_grid.clone(),
        problem.terminal,
        problem.coefficient.clone(),
        problem.barrier.interpolate(&problem.grid, &fine_grid),
    )?;
    let solved = solve_rbode(&fine, Method::Bruteforce)?;
    let y = solved.y.restrict(fine_factor).into_values();
    let substeps = match solved.quadrature {
        Quadrature::Flow { substeps } => substeps * fine_factor,
        Quadrature::Cubic { .. } => fine_factor,
    };
    let quadrature = Quadrature::Flow { substeps };
    let q = rbode::interval_integrals(&problem.coefficient, &problem.grid, &y, &quadrature);
    Ok(rbode::finish(
        problem,
        problem.coefficient.clone(),
        y,
        q,
        Method::Bruteforce,
        quadrature,
        solved.defect,
    ))
}
