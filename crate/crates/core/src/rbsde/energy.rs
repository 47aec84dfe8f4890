//! Discrete check of the `Z`-energy estimate
//! `(1/2) E Σ_{t<σ_n} |Z|² dt ≤ E[(1/γ²) sup e^{γ|Y|} + (1/γ) Σ e^{γ|Y|}(α+β|Y|) dt]
//!  + (1/γ) (E sup e^{2γ|Y|})^{1/2} (E K_T²)^{1/2}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{LatticeSolution, RbsdeError};

/// `v(x) = (e^{γx} − 1 − γx)/γ²`.
pub fn v_function(gamma: f64, x: f64) -> f64 {
    ((gamma * x).exp_m1() - gamma * x) / (gamma * gamma)
}

const EXHAUSTIVE_MAX_STEPS: usize = 16;
const SAMPLED_PATHS: usize = 1 << 16;
const MAX_THRESHOLDS: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLevel {
    pub n: f64,
    /// Mean of `σ_n / N` over the path sample.
    pub mean_sigma_fraction: f64,
    /// `(1/2) E Σ_{i<σ_n} Z_i² dt` over the path sample.
    pub lhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyCertificate {
    pub levels: Vec<EnergyLevel>,
    /// Exact `(1/2) E Σ_{i<N} Z_i² dt` (no localization).
    pub lhs_full: f64,
    pub rhs: f64,
    pub tol: f64,
    /// `true` when every level was evaluated on all `2^N` paths.
    pub exhaustive: bool,
}

impl EnergyCertificate {
    pub fn margin(&self) -> f64 {
        let worst = self.levels.iter().map(|l| l.lhs).fold(self.lhs_full, f64::max);
        self.rhs - worst
    }
}

/// `E[max_i g(i, node_i)]` along lattice paths, evaluated as
/// `g_min + Σ_k (u_k − u_{k−1}) P(max ≥ u_k)` over sorted thresholds. With
/// every distinct value as a threshold this is exact; when the number of
/// values exceeds `MAX_THRESHOLDS` a subset is used, which gives a lower
/// bound. Returns `(E[max g], E[max g²])`.
fn expected_path_max(g: &[Vec<f64>]) -> (f64, f64) {
    let mut values: Vec<f64> = g.iter().flatten().copied().collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let g_min = values[0];
    let thresholds: Vec<f64> = if values.len() - 1 <= MAX_THRESHOLDS {
        values[1..].to_vec()
    } else {
        (1..=MAX_THRESHOLDS)
            .map(|k| values[k * (values.len() - 1) / MAX_THRESHOLDS])
            .collect()
    };
    let n = g.len() - 1;
    let reach: Vec<f64> = thresholds
        .par_iter()
        .map(|&u| {
            let mut alive = vec![1.0f64];
            let mut hit = 0.0;
            for i in 0..=n {
                for j in 0..=i {
                    if g[i][j] >= u && alive[j] > 0.0 {
                        hit += alive[j];
                        alive[j] = 0.0;
                    }
                }
                if i < n {
                    alive = (0..=i + 1)
                        .map(|j| {
                            let down = if j <= i { alive[j] } else { 0.0 };
                            let up = if j >= 1 { alive[j - 1] } else { 0.0 };
                            0.5 * (down + up)
                        })
                        .collect();
                }
            }
            hit
        })
        .collect();
    let mut first = g_min;
    let mut second = g_min * g_min;
    let mut prev = g_min;
    for (&u, &p) in thresholds.iter().zip(&reach) {
        first += (u - prev) * p;
        second += (u * u - prev * prev) * p;
        prev = u;
    }
    (first, second)
}

/// Evaluates both sides of the energy estimate on a lattice solution for a
/// linear certificate `(α, β, γ)`.
pub fn z_energy_certificate(
    solution: &LatticeSolution,
    alpha: f64,
    beta: f64,
    gamma: f64,
    n_levels: &[f64],
    seed: u64,
) -> Result<EnergyCertificate, RbsdeError> {
    if !(gamma > 0.0) {
        return Err(RbsdeError::Assumption(format!("γ must be positive, got {gamma}")));
    }
    let n = solution.steps();
    let dt = solution.lattice.dt();
    let probs = &solution.probabilities;
    let e_y: Vec<Vec<f64>> = solution
        .y
        .iter()
        .map(|r| r.iter().map(|y| (gamma * y.abs()).exp()).collect())
        .collect();
    let (sup_e, sup_e2) = expected_path_max(&e_y);
    let running: f64 = (0..n)
        .map(|i| {
            (0..=i)
                .map(|j| {
                    let y = solution.y[i][j].abs();
                    probs[i][j] * e_y[i][j] * (alpha + beta * y)
                })
                .sum::<f64>()
                * dt
        })
        .sum();
    let k2 = solution.expected_k_terminal_sq();
    let rhs = sup_e / (gamma * gamma) + running / gamma + (sup_e2.sqrt() * k2.sqrt()) / gamma;
    let lhs_full = 0.5
        * (0..n)
            .map(|i| (0..=i).map(|j| probs[i][j] * solution.z[i][j].powi(2)).sum::<f64>() * dt)
            .sum::<f64>();

    let exhaustive = n <= EXHAUSTIVE_MAX_STEPS;
    let (count, weight) = if exhaustive {
        (1usize << n, 1.0 / (1u64 << n) as f64)
    } else {
        (SAMPLED_PATHS, 1.0 / SAMPLED_PATHS as f64)
    };
    // per path: (σ_n / N, (1/2) Σ_{i<σ_n} Z² dt) for every level
    let per_path: Vec<Vec<(f64, f64)>> = (0..count)
        .into_par_iter()
        .map(|idx| {
            let mut rng = (!exhaustive).then(|| {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                r.set_stream(idx as u64);
                r
            });
            let mut out = vec![(1.0, 0.0); n_levels.len()];
            let mut open: Vec<bool> = vec![true; n_levels.len()];
            let (mut energy, mut z2) = (0.0, 0.0);
            let mut node = 0usize;
            for i in 0..n {
                for (k, &level) in n_levels.iter().enumerate() {
                    if open[k] && energy >= level {
                        open[k] = false;
                        out[k] = (i as f64 / n as f64, 0.5 * z2);
                    }
                }
                let z = solution.z[i][node];
                energy += e_y[i][node].powi(2) * z * z * dt;
                z2 += z * z * dt;
                let up = match rng.as_mut() {
                    Some(r) => r.random::<bool>(),
                    None => (idx >> i) & 1 == 1,
                };
                node += usize::from(up);
            }
            for k in 0..n_levels.len() {
                if open[k] {
                    out[k] = (1.0, 0.5 * z2);
                }
            }
            out
        })
        .collect();
    let levels = n_levels
        .iter()
        .enumerate()
        .map(|(k, &level)| {
            let (sigma_sum, lhs_sum) = per_path
                .iter()
                .fold((0.0, 0.0), |acc, p| (acc.0 + p[k].0, acc.1 + p[k].1));
            EnergyLevel {
                n: level,
                mean_sigma_fraction: sigma_sum * weight,
                lhs: lhs_sum * weight,
            }
        })
        .collect::<Vec<_>>();
    let tol = 1e-10 * (1.0 + rhs.abs());
    let cert = EnergyCertificate {
        levels,
        lhs_full,
        rhs,
        tol,
        exhaustive,
    };
    if lhs_full > rhs + tol {
        return Err(RbsdeError::Certificate {
            level: f64::INFINITY,
            lhs: lhs_full,
            rhs,
        });
    }
    if let Some(l) = cert.levels.iter().find(|l| l.lhs > rhs + tol) {
        return Err(RbsdeError::Certificate {
            level: l.n,
            lhs: l.lhs,
            rhs,
        });
    }
    Ok(cert)
}
