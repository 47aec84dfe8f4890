//! Regression Monte Carlo backend (any dimension).
//!
//! Conditional expectations of `Y_{i+1}` and `Y_{i+1} ΔB_i / dt` given the
//! state are replaced by least-squares projections on monomials of
//! `B_{t_i}/√t_i` up to the basis degree. At each step the fitted
//! continuation `Ĉ = m̂ + f(t, ŷ, Ẑ) dt` gives the reported value
//! `max(L, Ĉ)` and `ΔK = (L − Ĉ)⁺`, as on the lattice.
//!
//! The quantity carried backward on each path and regressed at the next
//! step is the realized value (Longstaff–Schwartz): `L` where `L > Ĉ`,
//! otherwise the path's own next value plus `f dt`. Regressing the previous
//! step's fitted values instead compounds the upward bias of `max(L, ·)`
//! over every step.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{DriverMode, ProfileRow, RbsdeError, Scenario};

const RIDGE: f64 = 1e-10;
const CHUNK: usize = 4096;
const FIXED_POINT_TOL: f64 = 1e-12;
const FIXED_POINT_MAX_ITER: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionSettings {
    pub paths: usize,
    pub steps: usize,
    pub degree: usize,
    pub seed: u64,
    pub mode: DriverMode,
}

#[derive(Debug, Clone)]
pub struct RegressionSolution {
    pub settings: RegressionSettings,
    pub horizon: f64,
    pub dimension: usize,
    pub y0: f64,
    /// `std / √paths` of the realized per-path values at time 0.
    pub standard_error: f64,
    /// Per-step path means of `Y`.
    pub mean_y: Vec<f64>,
    /// Per-step path means of `ΔK` (length `steps`).
    pub mean_dk: Vec<f64>,
    /// Per-step rms of the fitted `Z` (length `steps`).
    pub z_rms: Vec<f64>,
    /// `K_T` per path.
    pub k_terminal: Vec<f64>,
    /// `Σ_i mean_p (Y − L) ΔK`, and the standard error of that sum.
    pub skorokhod: f64,
    pub skorokhod_se: f64,
    /// Smallest `Y − L` seen on any path and step.
    pub min_barrier_margin: f64,
}

impl RegressionSolution {
    pub fn time(&self, i: usize) -> f64 {
        self.horizon * i as f64 / self.settings.steps as f64
    }

    pub fn profile(&self) -> Vec<ProfileRow> {
        let n = self.settings.steps;
        let mut k = 0.0;
        (0..=n)
            .map(|i| {
                let row = ProfileRow {
                    t: self.time(i),
                    y_center: self.mean_y[i],
                    k_mean: k,
                    z_rms: (i < n).then(|| self.z_rms[i]),
                };
                if i < n {
                    k += self.mean_dk[i];
                }
                row
            })
            .collect()
    }
}

/// Exponent tuples of all monomials in `d` variables of total degree ≤ `q`.
fn exponents(d: usize, q: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0; d]];
    for _ in 0..q {
        let mut next = out.clone();
        for e in &out {
            for k in 0..d {
                let mut f = e.clone();
                f[k] += 1;
                if f.iter().sum::<usize>() <= q && !next.contains(&f) {
                    next.push(f);
                }
            }
        }
        out = next;
    }
    out.sort_by_key(|e| (e.iter().sum::<usize>(), std::cmp::Reverse(e.clone())));
    out
}

fn features(x: &[f64], scale: f64, basis: &[Vec<usize>], out: &mut [f64]) {
    for (slot, e) in out.iter_mut().zip(basis) {
        *slot = e.iter().zip(x).map(|(&p, &v)| (v / scale).powi(p as i32)).product();
    }
}

/// Least-squares coefficients for `targets` (columns) on the features of
/// every path. Partial sums are formed on fixed chunks and added in order.
fn fit(
    states: &[f64],
    dim: usize,
    scale: f64,
    basis: &[Vec<usize>],
    targets: &[Vec<f64>],
    step: usize,
) -> Result<Vec<DVector<f64>>, RbsdeError> {
    let m = basis.len();
    let paths = states.len() / dim;
    let partial: Vec<(DMatrix<f64>, Vec<DVector<f64>>)> = (0..paths)
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut a = DMatrix::<f64>::zeros(m, m);
            let mut b = vec![DVector::<f64>::zeros(m); targets.len()];
            let mut phi = vec![0.0; m];
            for &p in chunk {
                features(&states[p * dim..(p + 1) * dim], scale, basis, &mut phi);
                for r in 0..m {
                    for c in r..m {
                        a[(r, c)] += phi[r] * phi[c];
                    }
                    for (bt, t) in b.iter_mut().zip(targets) {
                        bt[r] += phi[r] * t[p];
                    }
                }
            }
            (a, b)
        })
        .collect();
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut b = vec![DVector::<f64>::zeros(m); targets.len()];
    for (pa, pb) in partial {
        a += pa;
        for (x, y) in b.iter_mut().zip(pb) {
            *x += y;
        }
    }
    let inv_n = 1.0 / paths as f64;
    a *= inv_n;
    for r in 0..m {
        for c in 0..r {
            a[(r, c)] = a[(c, r)];
        }
    }
    let max_diag = (0..m).map(|r| a[(r, r)]).fold(0.0f64, f64::max).max(1.0);
    for r in 0..m {
        a[(r, r)] += RIDGE;
    }
    let chol = a.cholesky().ok_or(RbsdeError::Basis { step })?;
    let min_pivot = (0..m).map(|r| chol.l_dirty()[(r, r)]).fold(f64::INFINITY, f64::min);
    if min_pivot * min_pivot <= 10.0 * RIDGE * max_diag {
        return Err(RbsdeError::Basis { step });
    }
    Ok(b.into_iter().map(|bt| chol.solve(&(bt * inv_n))).collect())
}

/// Regression Monte Carlo for the reflected scheme. Each path uses its own
/// ChaCha8 stream (stream index = path index) seeded with `seed`, and draws
/// its normals in (step, dimension) order.
pub fn solve_reflected_regression(
    scenario: &Scenario,
    settings: RegressionSettings,
) -> Result<RegressionSolution, RbsdeError> {
    let RegressionSettings {
        paths,
        steps,
        degree,
        seed,
        mode,
    } = settings;
    if steps == 0 {
        return Err(RbsdeError::InvalidScenario("regression needs at least one step".into()));
    }
    if paths < 10 * (degree + 1) * (degree + 1) {
        return Err(RbsdeError::InvalidScenario(format!(
            "need paths ≥ 10·(degree+1)² = {}, got {paths}",
            10 * (degree + 1) * (degree + 1)
        )));
    }
    let d = scenario.dimension;
    let dt = scenario.horizon / steps as f64;
    let sqrt_dt = dt.sqrt();
    let time = |i: usize| scenario.horizon * i as f64 / steps as f64;
    let row = (steps + 1) * d;

    // path-major states: states[p * row + i * d + k] = B^k_{t_i}
    let mut states = vec![0.0f64; paths * row];
    states.par_chunks_mut(row).enumerate().for_each(|(p, s)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(p as u64);
        for i in 0..steps {
            for k in 0..d {
                let g: f64 = StandardNormal.sample(&mut rng);
                s[(i + 1) * d + k] = s[i * d + k] + sqrt_dt * g;
            }
        }
    });
    let state = |p: usize, i: usize| &states[p * row + i * d..p * row + (i + 1) * d];

    for p in 0..paths {
        for i in 0..=steps {
            scenario.check_state(time(i), state(p, i), i == steps)?;
        }
    }

    let basis = exponents(d, degree);
    // realized per-path values, the regression targets
    let mut y: Vec<f64> = (0..paths).map(|p| scenario.xi(state(p, steps))).collect();
    if y.iter().any(|v| !v.is_finite()) {
        return Err(RbsdeError::Overflow { step: steps, node: 0 });
    }
    let mut k_terminal = vec![0.0; paths];
    let mut skorokhod_terms = vec![0.0; paths];
    let mut mean_y = vec![0.0; steps + 1];
    let mut mean_dk = vec![0.0; steps];
    let mut z_rms = vec![0.0; steps];
    let mut min_margin = f64::INFINITY;
    mean_y[steps] = y.iter().sum::<f64>() / paths as f64;

    for i in (0..steps).rev() {
        let t = time(i);
        let step_basis: Vec<Vec<usize>> = if i == 0 { vec![vec![0; d]] } else { basis.clone() };
        let scale = if i == 0 { 1.0 } else { t.sqrt() };
        let mut targets = vec![y.clone()];
        for k in 0..d {
            targets.push(
                (0..paths)
                    .map(|p| y[p] * (state(p, i + 1)[k] - state(p, i)[k]) / dt)
                    .collect(),
            );
        }
        let current: Vec<f64> = (0..paths).flat_map(|p| state(p, i).to_vec()).collect();
        let coef = fit(&current, d, scale, &step_basis, &targets, i)?;

        let results: Vec<(f64, f64, f64, f64, f64)> = (0..paths)
            .into_par_iter()
            .with_min_len(1024)
            .map(|p| {
                let x = state(p, i);
                let mut phi = vec![0.0; step_basis.len()];
                features(x, scale, &step_basis, &mut phi);
                let eval = |c: &DVector<f64>| phi.iter().zip(c.iter()).map(|(a, b)| a * b).sum::<f64>();
                let mean = eval(&coef[0]);
                let z: Vec<f64> = coef[1..].iter().map(eval).collect();
                let l = scenario.l(t, x);
                let y_hat = match mode {
                    DriverMode::Explicit => mean,
                    DriverMode::FixedPoint => {
                        let mut guess = mean;
                        let mut converged = false;
                        for _ in 0..FIXED_POINT_MAX_ITER {
                            let update = l.max(mean + scenario.driver.eval(t, guess, &z) * dt);
                            let done = (update - guess).abs() <= FIXED_POINT_TOL * update.abs().max(1.0);
                            guess = update;
                            if done {
                                converged = true;
                                break;
                            }
                        }
                        if !converged {
                            return Err(RbsdeError::Mode { step: i, node: p });
                        }
                        guess
                    }
                };
                let fdt = scenario.driver.eval(t, y_hat, &z) * dt;
                let c = mean + fdt;
                let value = l.max(c);
                let realized = if l > c { l } else { y[p] + fdt };
                if !value.is_finite() {
                    return Err(RbsdeError::Overflow { step: i, node: p });
                }
                Ok((value, value - c, realized, z.iter().map(|v| v * v).sum::<f64>(), l))
            })
            .collect::<Result<_, RbsdeError>>()?;

        let mut sum_y = 0.0;
        let mut sum_dk = 0.0;
        let mut sum_z2 = 0.0;
        for (p, &(value, dk, realized, z2, l)) in results.iter().enumerate() {
            y[p] = realized;
            k_terminal[p] += dk;
            skorokhod_terms[p] += (value - l) * dk;
            min_margin = min_margin.min(value - l);
            sum_y += value;
            sum_dk += dk;
            sum_z2 += z2;
        }
        mean_y[i] = sum_y / paths as f64;
        mean_dk[i] = sum_dk / paths as f64;
        z_rms[i] = (sum_z2 / paths as f64).sqrt();
    }

    let se = |v: &[f64]| {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
    };
    Ok(RegressionSolution {
        settings,
        horizon: scenario.horizon,
        dimension: d,
        y0: mean_y[0],
        standard_error: se(&y),
        mean_y,
        mean_dk,
        z_rms,
        k_terminal,
        skorokhod: skorokhod_terms.iter().sum::<f64>() / paths as f64,
        skorokhod_se: se(&skorokhod_terms),
        min_barrier_margin: min_margin,
    })
}
