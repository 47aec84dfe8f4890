use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::HarnessError;
use crate::rbsde::{solve_reflected_lattice, Certificate, Driver, DriverMode, Lattice, LatticeSolution, Scenario};

const DRIVER_PROBES: usize = 400;
const PROBE_RANGE: f64 = 10.0;

/// Probe margins `min(high − low)` for terminal, barrier and driver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderingCertificate {
    pub xi_margin: f64,
    pub barrier_margin: f64,
    pub driver_margin: f64,
    pub probes: usize,
}

impl OrderingCertificate {
    pub fn pass(&self) -> bool {
        self.xi_margin >= 0.0 && self.barrier_margin >= 0.0 && self.driver_margin >= 0.0
    }
}

/// Two scenarios with `ξ¹ ≤ ξ²`, `f¹ ≤ f²`, `L¹ ≤ L²`.
///
/// `certificate` checks the driver ordering on random probes and along the
/// `(ŷ, Z)` values of the low solution; `remark_certificate` checks it along
/// the high solution instead.
#[derive(Debug, Clone)]
pub struct OrderedScenarioPair {
    pub low: Scenario,
    pub high: Scenario,
    pub seed: u64,
    pub certificate: OrderingCertificate,
    pub remark_certificate: OrderingCertificate,
}

fn driver_margin_along(low: &Driver, high: &Driver, solution: &LatticeSolution) -> (f64, usize) {
    let lattice = &solution.lattice;
    let mut margin = f64::INFINITY;
    let mut count = 0;
    for i in 0..lattice.steps() {
        let t = lattice.time(i);
        for j in 0..=i {
            let z = [solution.z[i][j]];
            let mean = 0.5 * (solution.y[i + 1][j] + solution.y[i + 1][j + 1]);
            for y in [mean, solution.y[i][j]] {
                margin = margin.min(high.eval(t, y, &z) - low.eval(t, y, &z));
                count += 1;
            }
        }
    }
    (margin, count)
}

impl OrderedScenarioPair {
    pub fn new(low: Scenario, high: Scenario, lattice: &Lattice, seed: u64) -> Result<Self, HarnessError> {
        if low.dimension != 1 || high.dimension != 1 {
            return Err(HarnessError::InvalidInput(
                "comparison runs on the one-dimensional lattice".into(),
            ));
        }
        let n = lattice.steps();
        let mut probes = 0;
        let mut xi_margin = f64::INFINITY;
        let mut barrier_margin = f64::INFINITY;
        for i in 0..=n {
            let t = lattice.time(i);
            for j in 0..=i {
                let b = [lattice.node(i, j)];
                barrier_margin = barrier_margin.min(high.l(t, &b) - low.l(t, &b));
                probes += 1;
                if i == n {
                    xi_margin = xi_margin.min(high.xi(&b) - low.xi(&b));
                    probes += 1;
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut random_margin = f64::INFINITY;
        for _ in 0..DRIVER_PROBES {
            let t = rng.random_range(0.0..=low.horizon);
            let y = rng.random_range(-PROBE_RANGE..=PROBE_RANGE);
            let z = [rng.random_range(-PROBE_RANGE..=PROBE_RANGE)];
            random_margin = random_margin.min(high.driver.eval(t, y, &z) - low.driver.eval(t, y, &z));
        }
        probes += DRIVER_PROBES;
        let mode = DriverMode::default_for(&low.driver);
        let low_sol = solve_reflected_lattice(&low, lattice, mode)?;
        let high_sol = solve_reflected_lattice(&high, lattice, mode)?;
        let (along_low, c1) = driver_margin_along(&low.driver, &high.driver, &low_sol);
        let (along_high, c2) = driver_margin_along(&low.driver, &high.driver, &high_sol);
        let certificate = OrderingCertificate {
            xi_margin,
            barrier_margin,
            driver_margin: random_margin.min(along_low),
            probes: probes + c1,
        };
        let remark_certificate = OrderingCertificate {
            driver_margin: random_margin.min(along_high),
            probes: probes + c2,
            ..certificate
        };
        Ok(Self {
            low,
            high,
            seed,
            certificate,
            remark_certificate,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonVerdict {
    pub pass: bool,
    /// `min (Y² − Y¹)` over all nodes.
    pub worst_margin: f64,
    pub worst_node: (usize, usize),
    pub tolerance: f64,
}

/// Solves both scenarios on the same lattice (mode chosen from the low
/// driver) and asserts `Y¹ ≤ Y² + 1e-10·scale` at every node.
pub fn comparison_suite(pair: &OrderedScenarioPair, lattice: &Lattice) -> Result<ComparisonVerdict, HarnessError> {
    if !pair.certificate.pass() {
        return Err(HarnessError::Certificate(format!("{:?}", pair.certificate)));
    }
    let mode = DriverMode::default_for(&pair.low.driver);
    let low = solve_reflected_lattice(&pair.low, lattice, mode)?;
    let high = solve_reflected_lattice(&pair.high, lattice, mode)?;
    let mut worst_margin = f64::INFINITY;
    let mut worst_node = (0, 0);
    let mut scale: f64 = 1.0;
    for i in 0..=lattice.steps() {
        for j in 0..=i {
            let m = high.y[i][j] - low.y[i][j];
            scale = scale.max(1.0 + low.y[i][j].abs().max(high.y[i][j].abs()));
            if m < worst_margin {
                worst_margin = m;
                worst_node = (i, j);
            }
        }
    }
    let tolerance = 1e-10 * scale;
    Ok(ComparisonVerdict {
        pass: worst_margin >= -tolerance,
        worst_margin,
        worst_node,
        tolerance,
    })
}

/// Driver families used by the randomized campaigns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriverClass {
    /// `a + b y + c z`.
    Lipschitz,
    /// `a + b y cos y + c sin z`: linear growth, not globally Lipschitz.
    Linear,
    /// `a + b y + (γ/2) z²`.
    QuadraticZ,
}

impl DriverClass {
    pub fn name(self) -> &'static str {
        match self {
            DriverClass::Lipschitz => "lipschitz",
            DriverClass::Linear => "linear",
            DriverClass::QuadraticZ => "quadratic_z",
        }
    }

    /// Whether violations in this class fail a campaign.
    pub fn asserted(self) -> bool {
        self == DriverClass::Lipschitz
    }

    fn driver(self, a: f64, b: f64, c: f64, gamma: f64) -> Driver {
        match self {
            DriverClass::Lipschitz => Driver::affine(a, b, c, 1.0, 1),
            DriverClass::Linear => Driver::new(
                move |_, y, z| a + b * y * y.cos() + c * z[0].sin(),
                Certificate::Linear {
                    alpha: a.abs() + c.abs(),
                    beta: b.abs(),
                    gamma: 1.0,
                },
                None,
            ),
            DriverClass::QuadraticZ => Driver::new(
                move |_, y, z| a + b * y + 0.5 * gamma * z[0] * z[0],
                Certificate::Linear {
                    alpha: a.abs(),
                    beta: b.abs(),
                    gamma,
                },
                None,
            ),
        }
    }
}

/// Draws a bounded ordered pair: `ξ² = ξ¹ + d₀ + d₁(1 + tanh b)`,
/// `L^k = min(λ + e_k, ξ^k)`, `f² = f¹ + e` with nonnegative shifts (each
/// zero with probability 1/3).
pub fn random_ordered_pair(
    class: DriverClass,
    seed: u64,
    lattice: &Lattice,
) -> Result<OrderedScenarioPair, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift = |rng: &mut ChaCha8Rng| {
        if rng.random_range(0..3) == 0 {
            0.0
        } else {
            rng.random_range(0.0..0.5)
        }
    };
    let (p0, p1, p2) = (
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let (d0, d1) = (shift(&mut rng), shift(&mut rng));
    let (q0, q1, q2) = (
        rng.random_range(-1.5..0.5),
        rng.random_range(-0.5..0.5),
        rng.random_range(-0.5..0.5),
    );
    let e_l = shift(&mut rng);
    let (a, b, c) = (
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let gamma = rng.random_range(0.5..2.0);
    let e_f = shift(&mut rng);

    let xi_low = Arc::new(move |s: &[f64]| p0 + p1 * s[0].tanh() + p2 * (2.0 * s[0]).sin());
    let xi_high = {
        let xi = Arc::clone(&xi_low);
        Arc::new(move |s: &[f64]| xi(s) + d0 + d1 * (1.0 + s[0].tanh()))
    };
    let lambda = move |t: f64, s: &[f64]| q0 + q1 * (s[0] + t).cos() + q2 * t;
    let horizon = lattice.horizon();
    let build = |driver: Driver, xi: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>, e: f64| {
        let xi_l = Arc::clone(&xi);
        Scenario::from_arcs(
            driver,
            xi,
            Arc::new(move |t, s| (lambda(t, s) + e).min(xi_l(s))),
            Arc::new(|_| 10.0),
            horizon,
            1,
        )
    };
    let low = build(class.driver(a, b, c, gamma), xi_low, 0.0)?;
    let high = build(class.driver(a + e_f, b, c, gamma), xi_high, e_l)?;
    OrderedScenarioPair::new(low, high, lattice, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignReport {
    pub class: DriverClass,
    pub seed: u64,
    pub pairs: usize,
    /// `(pair seed, verdict)` for every failing pair.
    pub violations: Vec<(u64, ComparisonVerdict)>,
    pub worst_margin: f64,
    /// Pairs whose remark-variant certificate also passed.
    pub remark_certified: usize,
}

impl CampaignReport {
    /// Violations fail the campaign only for asserted classes.
    pub fn pass(&self) -> bool {
        !self.class.asserted() || self.violations.is_empty()
    }
}

/// Runs [`comparison_suite`] on `pairs` random ordered pairs with seeds
/// `seed, seed + 1, …`.
pub fn comparison_campaign(
    class: DriverClass,
    pairs: usize,
    seed: u64,
    lattice: &Lattice,
) -> Result<CampaignReport, HarnessError> {
    let mut violations = Vec::new();
    let mut worst_margin = f64::INFINITY;
    let mut remark_certified = 0;
    for k in 0..pairs as u64 {
        let pair = random_ordered_pair(class, seed.wrapping_add(k), lattice)?;
        remark_certified += usize::from(pair.remark_certificate.pass());
        let verdict = comparison_suite(&pair, lattice)?;
        worst_margin = worst_margin.min(verdict.worst_margin);
        if !verdict.pass {
            violations.push((pair.seed, verdict));
        }
    }
    Ok(CampaignReport {
        class,
        seed,
        pairs,
        violations,
        worst_margin,
        remark_certified,
    })
}
