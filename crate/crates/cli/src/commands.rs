//! Subcommand orchestration.

use std::fmt::Display;
use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbsde_core::bounds::{
    a_priori_bound, integrability_check, linear_theta_log, solve_theta, GrowthTransform, ThetaFamily,
};
use rbsde_core::grid::TimeGrid;
use rbsde_core::harness::{
    comparison_campaign, monotone_stability_check, oracle_snell, skorokhod_residual, DriverClass, HarnessError,
    SkorokhodInput, StabilityDirection, StabilityFamily,
};
use rbsde_core::rbode::{solve_rbode, Method};
use rbsde_core::rbsde::{
    build_lattice, from_transformed, localization_times, node_conditional_bounds, solve_reflected_lattice,
    solve_reflected_regression, transformed_scenario, truncate_terminal_sequence, z_energy_certificate, Certificate,
    Driver, DriverMode, Lattice, LatticeSolution, RbsdeError, RbsdeSolution, RegressionSettings, Scenario,
    TransformedValues,
};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::config::{Backend, ConfigError, ScenarioFile};
use crate::report::{write_csv, CheckRecord, ErrorRecord, Report, Skipped};

/// Every suite `verify` knows.
pub const SUITES: &[&str] = &[
    "skorokhod",
    "barrier",
    "bound",
    "energy",
    "truncation",
    "localization",
    "comparison",
    "snell",
    "stability",
    "transform",
];

/// Suites run when the scenario names none. `transform` is opt-in: the
/// discrete transformed scheme agrees with the direct one only to O(dt).
pub const DEFAULT_SUITES: &[&str] = &[
    "skorokhod",
    "barrier",
    "bound",
    "energy",
    "truncation",
    "localization",
    "comparison",
    "snell",
    "stability",
];

const SPOT_PROBES: usize = 2000;
const SPOT_RANGE: f64 = 10.0;
const QUANTILE_SAMPLES: usize = 4096;
const COMPARISON_PAIRS: usize = 100;
const COMPARISON_STEPS: usize = 50;
const SNELL_PAYOFFS: u64 = 20;
const SNELL_STEPS: usize = 100;
const DEFAULT_ENERGY_LEVELS: [f64; 4] = [0.1, 1.0, 10.0, 100.0];
const DEFAULT_LOCALIZATION_LEVELS: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];

pub const EXIT_OK: i32 = 0;
pub const EXIT_SOLVER: i32 = 1;
pub const EXIT_INVARIANT: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

mod refs {
    pub const DRIVER_GROWTH: &str = "driver growth |f(t,y,z)| ≤ α + β|y| + (γ/2)|z|² (or h(|y|) + (γ/2)|z|²)";
    pub const ALPHA_BETA_GAMMA: &str = "linear certificate regime α ≥ β/γ";
    pub const GROWTH_TRANSFORM: &str = "majorant H of the exponentially transformed driver";
    pub const ENVELOPE: &str = "barrier bounded by the deterministic envelope |L_t| ≤ a_t";
    pub const TERMINAL_BARRIER: &str = "terminal dominates the barrier L_T ≤ ξ";
    pub const INTEGRABILITY: &str = "exponential moment E exp(2γ e^{βT} |ξ|) < ∞";
    pub const COEFFICIENT_GROWTH: &str = "growth class of the ODE coefficient φ";
    pub const BARRIER_BAND: &str = "ODE barrier band 0 < α ≤ l_t ≤ β";
    pub const SKOROKHOD: &str = "Skorokhod condition ∫ (Y − L) dK = 0";
    pub const BARRIER: &str = "reflection keeps Y_t ≥ L_t";
    pub const K_INCREASING: &str = "K continuous nondecreasing with K_0 = 0";
    pub const RESIDUAL: &str = "integral equation y_t = x + ∫_t^T φ(y) ds + k_T − k_t";
    pub const PICARD: &str = "Picard iterate agrees with y_t = sup_{t≤s≤T} u_t^s";
    pub const THETA: &str = "θ solves the reflected ODE with barrier e^{γa} and is nonincreasing in t";
    pub const THETA_CLOSED: &str = "ln θ_t = e^{βτ}γx + (αγ/β)(e^{βτ} − 1) when the barrier is inactive";
    pub const BOUND_NODES: &str = "Y_t ≤ (1/γ) ln E[θ_t(ξ ∨ a_T) | F_t] at every node";
    pub const BOUND_Y0: &str = "Y_0 ≤ (1/γ) ln E[θ_0(ξ ∨ a_T)]";
    pub const ENERGY: &str = "Z-energy estimate up to σ_n against sup e^{γ|Y|} and E K_T²";
    pub const TRUNCATION: &str = "ξ ∧ n: Y^n nondecreasing, K^n nonincreasing in n";
    pub const SATURATION: &str = "ξ ∧ n equals ξ once n exceeds the lattice maximum of ξ";
    pub const LOCALIZATION: &str = "P(τ_m < T) nonincreasing in m";
    pub const COMPARISON: &str = "ξ¹ ≤ ξ², f¹ ≤ f², L¹ ≤ L² imply Y¹ ≤ Y²";
    pub const SNELL: &str = "f ≡ 0 reflected solution equals the Snell envelope of the barrier";
    pub const STABILITY: &str = "monotone data give monotone Y^p, opposite K^p, shrinking gaps";
    pub const TRANSFORM: &str = "Y = (1/γ) ln P for the exponentially transformed equation";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SolveRbode,
    SolveTheta,
    SolveRbsde,
    Verify,
    Bound,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SolveRbode => "solve-rbode",
            Command::SolveTheta => "solve-theta",
            Command::SolveRbsde => "solve-rbsde",
            Command::Verify => "verify",
            Command::Bound => "bound",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Options {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub backend: Option<Backend>,
    pub strict_assumptions: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ErrorKind {
    Config,
    Solver,
}

#[derive(Debug, Clone)]
struct RunError {
    kind: ErrorKind,
    module: &'static str,
    operation: &'static str,
    message: String,
}

fn config_err(operation: &'static str) -> impl FnOnce(ConfigError) -> RunError {
    move |e| RunError {
        kind: ErrorKind::Config,
        module: "cli",
        operation,
        message: e.to_string(),
    }
}

fn solver_err<E: Display>(module: &'static str, operation: &'static str) -> impl FnOnce(E) -> RunError {
    move |e| RunError {
        kind: ErrorKind::Solver,
        module,
        operation,
        message: e.to_string(),
    }
}

fn bad_config(operation: &'static str, message: impl Into<String>) -> RunError {
    RunError {
        kind: ErrorKind::Config,
        module: "cli",
        operation,
        message: message.into(),
    }
}

/// Runs one subcommand, writes its outputs and `report.json` into
/// `options.out`, and returns the report (with the exit code set).
pub fn run(command: Command, options: &Options) -> Report {
    let mut ctx = Context {
        report: Report::new(command.name(), &options.config, options.strict_assumptions),
        options: options.clone(),
        file: None,
    };
    let outcome = ctx.dispatch(command);
    let mut report = ctx.report;
    report.exit_code = match outcome {
        Err(e) => {
            let code = match e.kind {
                ErrorKind::Config => EXIT_CONFIG,
                ErrorKind::Solver => EXIT_SOLVER,
            };
            report.error = Some(ErrorRecord {
                module: e.module.into(),
                operation: e.operation.into(),
                message: e.message,
            });
            code
        }
        Ok(()) if report.failures().next().is_some() => EXIT_INVARIANT,
        Ok(()) => EXIT_OK,
    };
    if std::fs::create_dir_all(&options.out).is_ok() {
        if let Err(e) = report.write(&options.out.join("report.json")) {
            eprintln!("cannot write report.json: {e}");
            if report.exit_code == EXIT_OK {
                report.exit_code = EXIT_CONFIG;
            }
        }
    }
    report
}

struct Context {
    report: Report,
    options: Options,
    file: Option<ScenarioFile>,
}

/// Lattice or regression solution of the configured scenario.
struct Solved {
    solution: RbsdeSolution,
    /// The lattice solve, also kept as the companion for lattice-only suites.
    lattice: Option<LatticeSolution>,
}

impl Context {
    fn file(&self) -> &ScenarioFile {
        self.file.as_ref().expect("loaded")
    }

    fn seed(&self) -> u64 {
        self.file().numerics.seed
    }

    fn strict(&self) -> bool {
        self.options.strict_assumptions
    }

    fn out(&self, name: &str) -> PathBuf {
        self.options.out.join(name)
    }

    fn push(&mut self, check: CheckRecord) {
        self.report.checks.push(check);
    }

    fn skip(&mut self, suite: &str, reason: impl Into<String>) {
        self.report.skipped.push(Skipped {
            suite: suite.into(),
            reason: reason.into(),
        });
    }

    /// `true` when no enforced check has failed so far.
    fn clean(&self) -> bool {
        self.report.failures().next().is_none()
    }

    fn load(&mut self, command: Command) -> Result<(), RunError> {
        let mut file = ScenarioFile::load(&self.options.config).map_err(config_err("load_config"))?;
        if let Some(seed) = self.options.seed {
            file.numerics.seed = seed;
        }
        if let Some(backend) = self.options.backend {
            file.numerics.backend = backend;
        }
        if command == Command::Bound {
            file.numerics.backend = Backend::Lattice;
        }
        let uses_backend = matches!(command, Command::SolveRbsde | Command::Verify | Command::Bound);
        if uses_backend && file.numerics.backend == Backend::Lattice && file.dimension != 1 {
            return Err(bad_config("load_config", "the lattice backend needs dimension = 1"));
        }
        std::fs::create_dir_all(&self.options.out).map_err(|e| {
            bad_config(
                "create_output_dir",
                format!("cannot create {}: {e}", self.options.out.display()),
            )
        })?;
        self.report.name = Some(file.name.clone());
        self.report.seed = Some(file.numerics.seed);
        if uses_backend {
            self.report.backend = Some(file.numerics.backend.name().into());
        }
        self.file = Some(file);
        Ok(())
    }

    fn dispatch(&mut self, command: Command) -> Result<(), RunError> {
        self.load(command)?;
        match command {
            Command::SolveRbode => self.solve_rbode(),
            Command::SolveTheta => self.solve_theta(),
            Command::SolveRbsde => self.solve_rbsde(),
            Command::Verify => self.verify(),
            Command::Bound => self.bound(),
        }
    }

    // ---- assumptions --------------------------------------------------

    /// Assumption verdicts for a reflected BSDE scenario; returns `H` when
    /// the certificate admits one.
    fn rbsde_assumptions(
        &mut self,
        scenario: &Scenario,
        h_required: bool,
    ) -> Result<Option<GrowthTransform>, RunError> {
        let seed = self.seed();
        let f = self.file();
        let (horizon, d, backend, steps) = (f.horizon, f.dimension, f.numerics.backend, f.numerics.steps);

        let growth = match scenario.driver.spot_check(seed, SPOT_PROBES, SPOT_RANGE, horizon, d) {
            Ok(()) => CheckRecord::from_margin("assumption.driver_growth", refs::DRIVER_GROWTH, 0.0, 0.0),
            Err(e) => CheckRecord::failed("assumption.driver_growth", refs::DRIVER_GROWTH, e.to_string()),
        };
        self.push(
            growth
                .with_seed(seed)
                .with_detail(format!("{SPOT_PROBES} probes on [-{SPOT_RANGE}, {SPOT_RANGE}]")),
        );

        let certificate = scenario.driver.certificate().clone();
        if let Certificate::Linear { alpha, beta, gamma } = certificate {
            let rec = CheckRecord::from_margin(
                "assumption.alpha_beta_gamma",
                refs::ALPHA_BETA_GAMMA,
                alpha - beta / gamma,
                0.0,
            )
            .enforced_if(self.strict());
            self.push(rec);
        }

        let h = match certificate.growth_transform(false) {
            Ok(h) => {
                self.push(
                    CheckRecord::from_margin("assumption.growth_transform", refs::GROWTH_TRANSFORM, 0.0, 0.0)
                        .enforced_if(h_required),
                );
                Some(h)
            }
            Err(e) => {
                self.push(
                    CheckRecord::failed("assumption.growth_transform", refs::GROWTH_TRANSFORM, e.to_string())
                        .enforced_if(h_required),
                );
                None
            }
        };

        let (envelope_margin, terminal_margin) = match backend {
            Backend::Lattice => {
                let lattice = build_lattice(horizon, steps).map_err(solver_err("rbsde", "build_lattice"))?;
                barrier_margins(scenario, &lattice_states(&lattice))
            }
            Backend::Regression => barrier_margins(scenario, &probe_states(horizon, d, steps)),
        };
        let tol = 1e-12;
        self.push(CheckRecord::from_margin(
            "assumption.barrier_envelope",
            refs::ENVELOPE,
            envelope_margin,
            tol,
        ));
        self.push(CheckRecord::from_margin(
            "assumption.terminal_dominates_barrier",
            refs::TERMINAL_BARRIER,
            terminal_margin,
            0.0,
        ));

        if let Certificate::Linear { beta, gamma, .. } = certificate {
            let samples = self.terminal_samples(scenario)?;
            let moment = integrability_check(&samples, gamma, beta, horizon, true);
            let rec = if moment.is_finite() {
                CheckRecord::from_margin("assumption.integrability", refs::INTEGRABILITY, 0.0, 0.0)
            } else {
                CheckRecord::failed(
                    "assumption.integrability",
                    refs::INTEGRABILITY,
                    "moment overflows".into(),
                )
            };
            self.push(rec.with_detail(format!("moment = {moment}")));
        }
        Ok(h)
    }

    /// `(probability, ξ)` pairs for the terminal law: lattice terminal nodes,
    /// or midpoint quantiles of `N(0, dT)` for the sum of the components.
    fn terminal_samples(&self, scenario: &Scenario) -> Result<Vec<(f64, f64)>, RunError> {
        let f = self.file();
        match f.numerics.backend {
            Backend::Lattice => {
                let lattice =
                    build_lattice(f.horizon, f.numerics.steps).map_err(solver_err("rbsde", "build_lattice"))?;
                let n = lattice.steps();
                let probs = lattice.probabilities();
                Ok((0..=n)
                    .map(|k| (probs[n][k], scenario.xi(&[lattice.node(n, k)])))
                    .collect())
            }
            Backend::Regression => Ok(quantile_states(f.horizon, f.dimension)
                .into_iter()
                .map(|s| (1.0 / QUANTILE_SAMPLES as f64, scenario.xi(&s)))
                .collect()),
        }
    }

    // ---- solves -------------------------------------------------------

    fn lattice_solve(&self, scenario: &Scenario) -> Result<LatticeSolution, RunError> {
        let f = self.file();
        let lattice = build_lattice(f.horizon, f.numerics.steps).map_err(solver_err("rbsde", "build_lattice"))?;
        solve_reflected_lattice(scenario, &lattice, f.mode(&scenario.driver))
            .map_err(solver_err("rbsde", "solve_reflected_lattice"))
    }

    fn solve(&self, scenario: &Scenario) -> Result<Solved, RunError> {
        let f = self.file();
        let companion = if f.dimension == 1 {
            Some(self.lattice_solve(scenario)?)
        } else {
            None
        };
        let solution = match f.numerics.backend {
            Backend::Lattice => RbsdeSolution::Lattice(companion.clone().expect("dimension 1")),
            Backend::Regression => {
                let n = &f.numerics;
                let settings = RegressionSettings {
                    paths: n.paths,
                    steps: n.steps,
                    degree: n.degree,
                    seed: n.seed,
                    mode: f.mode(&scenario.driver),
                };
                RbsdeSolution::Regression(
                    solve_reflected_regression(scenario, settings)
                        .map_err(solver_err("rbsde", "solve_reflected_regression"))?,
                )
            }
        };
        Ok(Solved {
            solution,
            lattice: companion,
        })
    }

    fn record_solution(&mut self, solution: &RbsdeSolution) {
        self.report.y0 = Some(solution.y0());
        if let RbsdeSolution::Regression(r) = solution {
            self.report.y0_standard_error = Some(r.standard_error);
        }
    }

    fn skorokhod_check(&mut self, solution: &RbsdeSolution) {
        let rep = match solution {
            RbsdeSolution::Lattice(s) => skorokhod_residual(SkorokhodInput::Lattice(s)),
            RbsdeSolution::Regression(s) => skorokhod_residual(SkorokhodInput::Regression(s)),
        };
        let rec = match rep.standard_error {
            None => CheckRecord::from_margin("skorokhod", refs::SKOROKHOD, -rep.residual.abs(), 0.0),
            Some(se) => CheckRecord::from_margin("skorokhod", refs::SKOROKHOD, 3.0 * se - rep.residual.abs(), 0.0)
                .with_detail(format!("residual {} with standard error {se}", rep.residual)),
        };
        self.push(rec);
    }

    fn barrier_check(&mut self, solution: &RbsdeSolution) {
        let margin = match solution {
            RbsdeSolution::Lattice(s) => -s.barrier_violation(),
            RbsdeSolution::Regression(s) => s.min_barrier_margin,
        };
        self.push(CheckRecord::from_margin("barrier", refs::BARRIER, margin, 0.0));
    }

    fn solve_rbsde(&mut self) -> Result<(), RunError> {
        let scenario = self.file().scenario().map_err(config_err("build_scenario"))?;
        self.rbsde_assumptions(&scenario, false)?;
        if !self.clean() {
            return Ok(());
        }
        let solved = self.solve(&scenario)?;
        self.record_solution(&solved.solution);
        self.skorokhod_check(&solved.solution);
        self.barrier_check(&solved.solution);
        let rows: Vec<Vec<Option<f64>>> = solved
            .solution
            .profile()
            .into_iter()
            .map(|r| vec![Some(r.t), Some(r.y_center), Some(r.k_mean), r.z_rms])
            .collect();
        write_csv(&self.out("result.csv"), &["t", "Y0_profile", "K_mean", "Z_rms"], &rows)
            .map_err(solver_err("cli", "write_result_csv"))
    }

    fn solve_rbode(&mut self) -> Result<(), RunError> {
        let (problem, method) = self.file().rbode_problem().map_err(config_err("build_rbode_problem"))?;
        let seed = self.seed();
        let range = 2.0 * (1.0 + problem.terminal.abs() + problem.barrier.sup_abs());
        let growth = match problem.coefficient.spot_check(seed, SPOT_PROBES, range) {
            Ok(()) => CheckRecord::from_margin("assumption.coefficient_growth", refs::COEFFICIENT_GROWTH, 0.0, 0.0),
            Err(e) => CheckRecord::failed("assumption.coefficient_growth", refs::COEFFICIENT_GROWTH, e.to_string()),
        };
        self.push(growth.with_seed(seed).with_detail(format!(
            "{} class, {SPOT_PROBES} probes on [-{range}, {range}]",
            problem.coefficient.growth().name()
        )));
        let (lo, hi) = (problem.barrier.inf(), problem.barrier.sup());
        let band = if lo > 0.0 {
            let (alpha, beta) = (lo.min(1.0), hi.max(2.0));
            match problem.validate_barrier_band(alpha, beta) {
                Ok(()) => CheckRecord::from_margin("assumption.barrier_band", refs::BARRIER_BAND, lo, 0.0)
                    .with_detail(format!("band [{alpha}, {beta}]")),
                Err(e) => CheckRecord::failed("assumption.barrier_band", refs::BARRIER_BAND, e.to_string()),
            }
        } else {
            CheckRecord::from_margin("assumption.barrier_band", refs::BARRIER_BAND, lo, 0.0)
                .with_detail(format!("inf l = {lo} is not positive"))
        };
        self.push(band.enforced_if(self.strict()));
        if !self.clean() {
            return Ok(());
        }
        let sol = solve_rbode(&problem, method).map_err(solver_err("rbode", "solve_rbode"))?;
        self.report.y0 = Some(sol.y.first());
        let inv = sol.check_invariants(&problem);
        self.push(
            CheckRecord::from_margin("rbode.barrier", refs::BARRIER, inv.barrier_margin, inv.tol)
                .with_detail(format!("method {}", method.name())),
        );
        self.push(CheckRecord::from_margin(
            "rbode.k_nondecreasing",
            refs::K_INCREASING,
            inv.min_increment,
            inv.tol,
        ));
        let sk = skorokhod_residual(SkorokhodInput::Rbode(&sol, &problem.barrier));
        self.push(CheckRecord::from_margin(
            "rbode.skorokhod",
            refs::SKOROKHOD,
            -sk.residual.abs(),
            inv.tol,
        ));
        self.push(CheckRecord::from_margin(
            "rbode.residual",
            refs::RESIDUAL,
            -inv.residual,
            inv.tol,
        ));
        if method == Method::Picard {
            let reference =
                solve_rbode(&problem, Method::Representation).map_err(solver_err("rbode", "solve_rbode"))?;
            let gap = sol.y.sup_distance(&reference.y);
            let tol = 1e-6 * (1.0 + reference.y.sup_abs());
            self.push(CheckRecord::from_margin(
                "rbode.picard_vs_representation",
                refs::PICARD,
                -gap,
                tol,
            ));
        }
        let grid = problem.grid.points();
        let rows: Vec<Vec<Option<f64>>> = (0..grid.len())
            .map(|i| vec![Some(grid[i]), Some(sol.y.values()[i]), Some(sol.k.values()[i])])
            .collect();
        write_csv(&self.out("result.csv"), &["t", "y", "k"], &rows).map_err(solver_err("cli", "write_result_csv"))
    }

    fn solve_theta(&mut self) -> Result<(), RunError> {
        let file = self.file();
        let block = file.theta_block().map_err(config_err("build_theta_problem"))?.clone();
        let certificate = file
            .driver_block()
            .and_then(|d| d.build(file.dimension))
            .map_err(config_err("build_driver"))?
            .certificate()
            .clone();
        let grid = TimeGrid::uniform(file.horizon, block.steps)
            .map_err(|e| bad_config("build_theta_problem", e.to_string()))?;
        let a = file.envelope_path(&grid).map_err(config_err("build_theta_problem"))?;
        if let Certificate::Linear { alpha, beta, gamma } = certificate {
            let rec = CheckRecord::from_margin(
                "assumption.alpha_beta_gamma",
                refs::ALPHA_BETA_GAMMA,
                alpha - beta / gamma,
                0.0,
            )
            .enforced_if(self.strict());
            self.push(rec);
        }
        let h = match certificate.growth_transform(false) {
            Ok(h) => {
                self.push(CheckRecord::from_margin(
                    "assumption.growth_transform",
                    refs::GROWTH_TRANSFORM,
                    0.0,
                    0.0,
                ));
                h
            }
            Err(e) => {
                self.push(CheckRecord::failed(
                    "assumption.growth_transform",
                    refs::GROWTH_TRANSFORM,
                    e.to_string(),
                ));
                return Ok(());
            }
        };
        if !self.clean() {
            return Ok(());
        }
        let sol = solve_theta(block.x, &h, &a, &grid).map_err(solver_err("bounds", "solve_theta"))?;
        self.report.y0 = Some(sol.theta.first());
        let inv = sol.solution.check_invariants(&sol.problem);
        let rec = match sol.check() {
            Ok(()) => CheckRecord::from_margin("theta.invariants", refs::THETA, inv.barrier_margin.min(0.0), inv.tol),
            Err(e) => CheckRecord::failed("theta.invariants", refs::THETA, e.to_string()),
        };
        self.push(rec);
        let sk = skorokhod_residual(SkorokhodInput::Rbode(&sol.solution, &sol.problem.barrier));
        self.push(CheckRecord::from_margin(
            "theta.skorokhod",
            refs::SKOROKHOD,
            -sk.residual.abs(),
            inv.tol,
        ));
        if let Certificate::Linear { alpha, beta, gamma } = certificate {
            if sol.k.last() == 0.0 && block.x >= 0.0 {
                let exact = linear_theta_log(alpha, beta, gamma, block.x, grid.horizon());
                let rel = (sol.theta.first().ln() - exact).abs() / exact.abs().max(1.0);
                self.push(
                    CheckRecord::from_margin("theta.closed_form", refs::THETA_CLOSED, -rel, 1e-6)
                        .with_detail(format!("ln θ_0 closed form {exact}")),
                );
            }
        }
        let pts = grid.points();
        let rows: Vec<Vec<Option<f64>>> = (0..pts.len())
            .map(|i| vec![Some(pts[i]), Some(sol.theta.values()[i]), Some(sol.k.values()[i])])
            .collect();
        write_csv(&self.out("result.csv"), &["t", "theta", "k"], &rows).map_err(solver_err("cli", "write_result_csv"))
    }

    // ---- bounds -------------------------------------------------------

    fn theta_family(
        &self,
        scenario: &Scenario,
        h: &GrowthTransform,
        grid: &TimeGrid,
        samples: &[(f64, f64)],
    ) -> Result<ThetaFamily, RunError> {
        let a = scenario.envelope_path(grid);
        let a_t = scenario.a(scenario.horizon);
        let (lo, hi) = samples
            .iter()
            .map(|&(_, x)| x.max(a_t))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), x| (l.min(x), u.max(x)));
        let points = self.file().numerics.theta_points;
        ThetaFamily::on_range(lo, hi + 1e-9 * (1.0 + hi.abs()), points, h, &a, grid)
            .map_err(solver_err("bounds", "theta_family"))
    }

    /// Node-conditional bounds on the lattice of `solution`, with the
    /// node-wise and time-0 checks.
    fn lattice_bound_checks(
        &mut self,
        scenario: &Scenario,
        h: &GrowthTransform,
        solution: &LatticeSolution,
    ) -> Result<Vec<Vec<f64>>, RunError> {
        let lattice = solution.lattice;
        let n = lattice.steps();
        let samples: Vec<(f64, f64)> = (0..=n)
            .map(|k| (solution.probabilities[n][k], scenario.xi(&[lattice.node(n, k)])))
            .collect();
        let family = self.theta_family(scenario, h, &lattice.grid(), &samples)?;
        let bounds = node_conditional_bounds(scenario, &lattice, &family)
            .map_err(solver_err("rbsde", "node_conditional_bounds"))?;
        let mut margin = f64::INFINITY;
        let mut scale: f64 = 0.0;
        for (yr, br) in solution.y.iter().zip(&bounds) {
            for (y, b) in yr.iter().zip(br) {
                margin = margin.min(b - y);
                scale = scale.max(b.abs());
            }
        }
        self.push(CheckRecord::from_margin(
            "bound.nodes",
            refs::BOUND_NODES,
            margin,
            1e-8 * (1.0 + scale),
        ));
        let top = a_priori_bound(&family, &samples, scenario.a(scenario.horizon), 0)
            .map_err(solver_err("bounds", "a_priori_bound"))?;
        self.push(
            CheckRecord::from_margin(
                "bound.y0",
                refs::BOUND_Y0,
                top - solution.y0(),
                1e-8 * (1.0 + top.abs()),
            )
            .with_detail(format!("bound {top}")),
        );
        Ok(bounds)
    }

    fn regression_bound_check(&mut self, scenario: &Scenario, h: &GrowthTransform, y0: f64) -> Result<(), RunError> {
        let f = self.file();
        let grid = TimeGrid::uniform(f.horizon, f.numerics.steps).map_err(solver_err("grid", "uniform"))?;
        let samples = self.terminal_samples(scenario)?;
        let family = self.theta_family(scenario, h, &grid, &samples)?;
        let top = a_priori_bound(&family, &samples, scenario.a(scenario.horizon), 0)
            .map_err(solver_err("bounds", "a_priori_bound"))?;
        self.push(
            CheckRecord::from_margin("bound.y0", refs::BOUND_Y0, top - y0, 1e-8 * (1.0 + top.abs()))
                .with_detail(format!("bound {top} from {QUANTILE_SAMPLES} terminal quantiles")),
        );
        Ok(())
    }

    fn bound(&mut self) -> Result<(), RunError> {
        let scenario = self.file().scenario().map_err(config_err("build_scenario"))?;
        let h = self.rbsde_assumptions(&scenario, true)?;
        if !self.clean() {
            return Ok(());
        }
        let h = h.expect("enforced");
        let sol = self.lattice_solve(&scenario)?;
        let solution = RbsdeSolution::Lattice(sol.clone());
        self.record_solution(&solution);
        self.skorokhod_check(&solution);
        self.barrier_check(&solution);
        let bounds = self.lattice_bound_checks(&scenario, &h, &sol)?;
        let rows: Vec<Vec<Option<f64>>> = (0..=sol.steps())
            .map(|i| {
                let j = i.div_ceil(2);
                vec![
                    Some(sol.lattice.time(i)),
                    Some(sol.barrier[i][j]),
                    Some(sol.y[i][j]),
                    Some(bounds[i][j]),
                ]
            })
            .collect();
        write_csv(&self.out("bound.csv"), &["t", "lower", "Y", "upper"], &rows)
            .map_err(solver_err("cli", "write_bound_csv"))
    }

    // ---- verify -------------------------------------------------------

    fn verify(&mut self) -> Result<(), RunError> {
        let scenario = self.file().scenario().map_err(config_err("build_scenario"))?;
        let suites: Vec<String> = match &self.file().checks.suites {
            Some(s) => s.clone(),
            None => DEFAULT_SUITES.iter().map(|s| s.to_string()).collect(),
        };
        let wants = |name: &str| suites.iter().any(|s| s == name);
        let h = self.rbsde_assumptions(&scenario, wants("bound") || wants("localization"))?;
        if !self.clean() {
            return Ok(());
        }
        let solved = self.solve(&scenario)?;
        self.record_solution(&solved.solution);
        let mut bounds: Option<Vec<Vec<f64>>> = None;
        for suite in &suites {
            match suite.as_str() {
                "skorokhod" => self.skorokhod_check(&solved.solution),
                "barrier" => self.barrier_check(&solved.solution),
                "bound" => {
                    let h = h.as_ref().expect("enforced");
                    match &solved.solution {
                        RbsdeSolution::Lattice(s) => bounds = Some(self.lattice_bound_checks(&scenario, h, s)?),
                        RbsdeSolution::Regression(s) => self.regression_bound_check(&scenario, h, s.y0)?,
                    }
                }
                "energy" => self.energy_suite(&scenario, solved.lattice.as_ref())?,
                "truncation" => self.truncation_suite(&scenario)?,
                "localization" => {
                    let Some(sol) = solved.lattice.as_ref() else {
                        self.skip("localization", "needs the one-dimensional lattice");
                        continue;
                    };
                    let b = match bounds.take() {
                        Some(b) => b,
                        None => {
                            let h = h.as_ref().expect("enforced");
                            let n_before = self.report.checks.len();
                            let b = self.lattice_bound_checks(&scenario, h, sol)?;
                            self.report.checks.truncate(n_before);
                            b
                        }
                    };
                    self.localization_suite(&b);
                    bounds = Some(b);
                }
                "comparison" => self.comparison_suite()?,
                "snell" => self.snell_suite()?,
                "stability" => self.stability_suite(&scenario)?,
                "transform" => self.transform_suite(&scenario)?,
                other => unreachable!("suite {other} validated at load"),
            }
        }
        Ok(())
    }

    fn energy_suite(&mut self, scenario: &Scenario, lattice: Option<&LatticeSolution>) -> Result<(), RunError> {
        let Some(sol) = lattice else {
            self.skip("energy", "needs the one-dimensional lattice");
            return Ok(());
        };
        let Certificate::Linear { alpha, beta, gamma } = *scenario.driver.certificate() else {
            self.skip("energy", "needs a linear (α, β, γ) certificate");
            return Ok(());
        };
        let f = self.file();
        let levels = f
            .numerics
            .energy_levels
            .clone()
            .unwrap_or_else(|| DEFAULT_ENERGY_LEVELS.to_vec());
        let seed = f.numerics.seed;
        let detail = if f.numerics.backend == Backend::Lattice {
            String::new()
        } else {
            "evaluated on the lattice solve of the same scenario; ".into()
        };
        let rec = match z_energy_certificate(sol, alpha, beta, gamma, &levels, seed) {
            Ok(cert) => CheckRecord::from_margin("energy", refs::ENERGY, cert.margin(), cert.tol).with_detail(format!(
                "{detail}rhs {}, full lhs {}, levels {:?}, exhaustive {}",
                cert.rhs,
                cert.lhs_full,
                cert.levels.iter().map(|l| l.lhs).collect::<Vec<_>>(),
                cert.exhaustive
            )),
            Err(RbsdeError::Certificate { level, lhs, rhs }) => CheckRecord {
                margin: rhs - lhs,
                ..CheckRecord::failed("energy", refs::ENERGY, format!("{detail}violated at level {level}"))
            },
            Err(e) => return Err(solver_err("rbsde", "z_energy_certificate")(e)),
        };
        self.push(rec.with_seed(seed));
        Ok(())
    }

    fn truncation_suite(&mut self, scenario: &Scenario) -> Result<(), RunError> {
        let f = self.file();
        let Some(levels) = f.terminal.as_ref().and_then(|t| t.truncation.clone()) else {
            self.skip("truncation", "no terminal.truncation levels");
            return Ok(());
        };
        if f.dimension != 1 {
            self.skip("truncation", "needs the one-dimensional lattice");
            return Ok(());
        }
        let lattice = build_lattice(f.horizon, f.numerics.steps).map_err(solver_err("rbsde", "build_lattice"))?;
        let mode = f.mode(&scenario.driver);
        match truncate_terminal_sequence(scenario, &lattice, &levels, mode) {
            Ok((_, rep)) => {
                self.push(
                    CheckRecord::from_margin("truncation.monotone", refs::TRUNCATION, 0.0, 1e-12)
                        .with_detail(format!("Y0 per level {:?}", rep.y0)),
                );
                let n = lattice.steps();
                let top = (0..=n)
                    .map(|k| scenario.xi(&[lattice.node(n, k)]))
                    .fold(f64::NEG_INFINITY, f64::max);
                match levels.iter().position(|&v| v >= top) {
                    Some(first) => {
                        let saturated = rep.saturated_from.is_some_and(|s| s <= first);
                        let rec = if saturated {
                            CheckRecord::from_margin("truncation.saturation", refs::SATURATION, 0.0, 0.0)
                        } else {
                            CheckRecord::failed(
                                "truncation.saturation",
                                refs::SATURATION,
                                format!("level {} ≥ max ξ = {top} but solutions differ", levels[first]),
                            )
                        };
                        self.push(rec.with_detail(format!("saturated from level index {:?}", rep.saturated_from)));
                    }
                    None => self.skip("truncation.saturation", format!("no level reaches max ξ = {top}")),
                }
            }
            Err(RbsdeError::Invariant(msg)) => {
                self.push(CheckRecord::failed("truncation.monotone", refs::TRUNCATION, msg));
            }
            Err(e @ RbsdeError::InvalidScenario(_)) => {
                return Err(RunError {
                    kind: ErrorKind::Config,
                    module: "rbsde",
                    operation: "truncate_terminal_sequence",
                    message: e.to_string(),
                })
            }
            Err(e) => return Err(solver_err("rbsde", "truncate_terminal_sequence")(e)),
        }
        Ok(())
    }

    fn localization_suite(&mut self, bounds: &[Vec<f64>]) {
        let levels = self
            .file()
            .numerics
            .localization_levels
            .clone()
            .unwrap_or_else(|| DEFAULT_LOCALIZATION_LEVELS.to_vec());
        let rep = localization_times(bounds, &levels);
        let probs: Vec<f64> = rep.levels.iter().map(|l| l.hit_probability).collect();
        let rec = if rep.is_monotone() {
            CheckRecord::from_margin("localization", refs::LOCALIZATION, 0.0, 1e-15)
        } else {
            CheckRecord::failed("localization", refs::LOCALIZATION, "hit probabilities increase".into())
        };
        self.push(rec.with_detail(format!("levels {levels:?}, P(τ_m < T) {probs:?}")));
    }

    fn comparison_suite(&mut self) -> Result<(), RunError> {
        let seed = self.seed();
        let lattice =
            build_lattice(self.file().horizon, COMPARISON_STEPS).map_err(solver_err("rbsde", "build_lattice"))?;
        for class in [DriverClass::Lipschitz, DriverClass::Linear, DriverClass::QuadraticZ] {
            let name = format!("comparison.{}", class.name());
            let rec = match comparison_campaign(class, COMPARISON_PAIRS, seed, &lattice) {
                Ok(rep) => CheckRecord {
                    pass: rep.pass(),
                    ..CheckRecord::from_margin(&name, refs::COMPARISON, rep.worst_margin, 1e-10)
                }
                .with_detail(format!(
                    "{} pairs, {} violations, {} with the remark certificate",
                    rep.pairs,
                    rep.violations.len(),
                    rep.remark_certified
                )),
                Err(HarnessError::Certificate(msg)) => CheckRecord::failed(&name, refs::COMPARISON, msg),
                Err(e) => return Err(solver_err("harness", "comparison_campaign")(e)),
            };
            self.push(rec.enforced_if(class.asserted()).with_seed(seed));
        }
        Ok(())
    }

    fn snell_suite(&mut self) -> Result<(), RunError> {
        let seed = self.seed();
        let horizon = self.file().horizon;
        let lattice = build_lattice(horizon, SNELL_STEPS).map_err(solver_err("rbsde", "build_lattice"))?;
        let mut worst: f64 = 0.0;
        for k in 0..SNELL_PAYOFFS {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k));
            let (c0, c1, c2, w): (f64, f64, f64, f64) = (
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.5..4.0),
            );
            let g = move |t: f64, b: f64| (c0 + c1 * (w * b).sin() + c2 * t * b).clamp(-5.0, 5.0);
            let s = Scenario::new(
                Driver::zero(1.0),
                move |x| g(horizon, x[0]),
                move |t, x| g(t, x[0]),
                |_| 5.0,
                horizon,
                1,
            )
            .map_err(solver_err("rbsde", "scenario"))?;
            let sol = solve_reflected_lattice(&s, &lattice, DriverMode::Explicit)
                .map_err(solver_err("rbsde", "solve_reflected_lattice"))?;
            let oracle = oracle_snell(&lattice, |i, j| g(lattice.time(i), lattice.node(i, j)));
            for (a, b) in sol.y.iter().flatten().zip(oracle.iter().flatten()) {
                worst = worst.max((a - b).abs());
            }
        }
        self.push(
            CheckRecord::from_margin("snell", refs::SNELL, -worst, 1e-12)
                .with_seed(seed)
                .with_detail(format!("{SNELL_PAYOFFS} payoffs, N = {SNELL_STEPS}")),
        );
        Ok(())
    }

    /// `f − 1/p` for `p = 1..=5`, then `f`, on the configured scenario.
    fn stability_suite(&mut self, scenario: &Scenario) -> Result<(), RunError> {
        let f = self.file();
        if f.dimension != 1 {
            self.skip("stability", "needs the one-dimensional lattice");
            return Ok(());
        }
        let lattice = build_lattice(f.horizon, f.numerics.steps).map_err(solver_err("rbsde", "build_lattice"))?;
        let n = lattice.steps();
        let mut bound: f64 = 0.0;
        for i in 0..=n {
            for j in 0..=i {
                let b = [lattice.node(i, j)];
                bound = bound.max(scenario.l(lattice.time(i), &b).abs());
                if i == n {
                    bound = bound.max(scenario.xi(&b).abs());
                }
            }
        }
        let mut members: Vec<Scenario> = (1..=5)
            .map(|p| {
                let c = 1.0 / p as f64;
                let base = scenario.driver.function();
                let certificate = match *scenario.driver.certificate() {
                    Certificate::Linear { alpha, beta, gamma } => Certificate::Linear {
                        alpha: alpha + c,
                        beta,
                        gamma,
                    },
                    ref other => other.clone(),
                };
                let driver = Driver::from_arc(
                    Arc::new(move |t, y, z| base(t, y, z) - c),
                    certificate,
                    scenario.driver.lipschitz(),
                );
                scenario.with_driver(driver)
            })
            .collect();
        members.push(scenario.clone());
        let family = StabilityFamily::new(members, StabilityDirection::Increasing, bound, &lattice)
            .map_err(solver_err("harness", "stability_family"))?;
        let rec = match monotone_stability_check(&family, &lattice) {
            Ok(rep) => CheckRecord::from_margin("stability", refs::STABILITY, 0.0, 1e-12)
                .with_detail(format!("f − 1/p, gaps to limit {:?}", rep.gaps_to_limit)),
            Err(e @ HarnessError::Monotonicity { .. }) => {
                CheckRecord::failed("stability", refs::STABILITY, e.to_string())
            }
            Err(e) => return Err(solver_err("harness", "monotone_stability_check")(e)),
        };
        self.push(rec);
        Ok(())
    }

    /// Reported only: the transformed lattice scheme matches the direct one
    /// to O(dt), not to roundoff.
    fn transform_suite(&mut self, scenario: &Scenario) -> Result<(), RunError> {
        let f = self.file();
        if f.dimension != 1 {
            self.skip("transform", "needs the one-dimensional lattice");
            return Ok(());
        }
        let lattice = build_lattice(f.horizon, f.numerics.steps).map_err(solver_err("rbsde", "build_lattice"))?;
        let rec = match transform_gap(scenario, &lattice) {
            Ok((gap, scale)) => CheckRecord::from_margin("transform", refs::TRANSFORM, -gap, 1e-9 * scale)
                .with_detail(format!("sup gap {gap}")),
            Err(e) => CheckRecord::failed("transform", refs::TRANSFORM, e.to_string()),
        };
        self.push(rec.advisory());
        Ok(())
    }
}

fn transform_gap(scenario: &Scenario, lattice: &Lattice) -> Result<(f64, f64), RbsdeError> {
    let gamma = scenario.driver.certificate().gamma();
    let direct = solve_reflected_lattice(scenario, lattice, DriverMode::default_for(&scenario.driver))?;
    let ts = transformed_scenario(scenario, gamma)?;
    let t = solve_reflected_lattice(&ts, lattice, DriverMode::default_for(&ts.driver))?;
    let (mapped, _, _) = from_transformed(
        &TransformedValues {
            p: t.y,
            q: t.z,
            dj: t.dk,
        },
        gamma,
    );
    let mut gap: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for (a, b) in direct.y.iter().flatten().zip(mapped.iter().flatten()) {
        gap = gap.max((a - b).abs());
        scale = scale.max(1.0 + a.abs());
    }
    Ok((gap, scale))
}

/// `(t, state, at_horizon)` for every lattice node.
fn lattice_states(lattice: &Lattice) -> Vec<(f64, Vec<f64>, bool)> {
    let n = lattice.steps();
    (0..=n)
        .flat_map(|i| (0..=i).map(move |j| (lattice.time(i), vec![lattice.node(i, j)], i == n)))
        .collect()
}

/// Probe states on `steps` times: 201 points of the sum of the components
/// over `±6` standard deviations, carried by the first component.
fn probe_states(horizon: f64, d: usize, steps: usize) -> Vec<(f64, Vec<f64>, bool)> {
    let mut out = Vec::new();
    for i in 0..=steps {
        let t = horizon * i as f64 / steps as f64;
        let sd = (d as f64 * t).sqrt();
        let count = if i == 0 { 1 } else { 201 };
        for k in 0..count {
            let b = if count == 1 {
                0.0
            } else {
                sd * (-6.0 + 12.0 * k as f64 / (count - 1) as f64)
            };
            let mut s = vec![0.0; d];
            s[0] = b;
            out.push((t, s, i == steps));
        }
    }
    out
}

/// Midpoint quantiles of `N(0, dT)` carried by the first component.
fn quantile_states(horizon: f64, d: usize) -> Vec<Vec<f64>> {
    let normal = Normal::new(0.0, (d as f64 * horizon).sqrt()).expect("positive variance");
    (0..QUANTILE_SAMPLES)
        .map(|k| {
            let mut s = vec![0.0; d];
            s[0] = normal.inverse_cdf((k as f64 + 0.5) / QUANTILE_SAMPLES as f64);
            s
        })
        .collect()
}

/// `(min (a_t − |L|), min (ξ − L_T))` over the given states.
fn barrier_margins(scenario: &Scenario, states: &[(f64, Vec<f64>, bool)]) -> (f64, f64) {
    let mut envelope = f64::INFINITY;
    let mut terminal = f64::INFINITY;
    for (t, s, last) in states {
        let l = scenario.l(*t, s);
        envelope = envelope.min(scenario.a(*t) - l.abs());
        if *last {
            terminal = terminal.min(scenario.xi(s) - l);
        }
    }
    (envelope, terminal)
}
