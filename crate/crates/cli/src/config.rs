//! TOML scenario files.

use std::path::Path;
use std::sync::Arc;

use rbsde_core::bounds::SuperlinearGrowth;
use rbsde_core::grid::{ScalarPath, TimeGrid};
use rbsde_core::rbode::{Coefficient, GrowthClass, Method, RbodeProblem};
use rbsde_core::rbsde::{Certificate, Driver, DriverMode, Scenario};
use serde::Deserialize;
use thiserror::Error;

use crate::expr::{Env, Expr, ExprError, Var};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("{field}: {source}")]
    Expr {
        field: &'static str,
        #[source]
        source: ExprError,
    },
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

fn default_one() -> f64 {
    1.0
}

fn default_dimension() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default = "default_one")]
    pub horizon: f64,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    pub driver: Option<DriverBlock>,
    pub terminal: Option<TerminalBlock>,
    pub barrier: Option<BarrierBlock>,
    #[serde(default)]
    pub numerics: NumericsBlock,
    #[serde(default)]
    pub checks: ChecksBlock,
    pub rbode: Option<RbodeBlock>,
    pub theta: Option<ThetaBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriverKind {
    Zero,
    Constant,
    Linear,
    QuadraticZ,
    Custom,
}

/// `zero`: `f ≡ 0`; `constant`: `f ≡ value`; `linear`: `a + b y + c Σz`;
/// `quadratic_z`: `a + b y + (γ/2)|z|²`; `custom`: `expression` in
/// `t, y, z` with either `alpha`/`beta` or a superlinear `h` (in `y`).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverBlock {
    pub kind: DriverKind,
    #[serde(default = "default_one")]
    pub gamma: f64,
    pub value: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub c: Option<f64>,
    pub expression: Option<String>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub h: Option<String>,
    pub lipschitz: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalBlock {
    /// Expression in `b`.
    pub expression: String,
    /// Increasing truncation levels for the `truncation` check.
    pub truncation: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierBlock {
    /// Expression in `t, b`.
    pub expression: String,
    /// Deterministic envelope `a_t`, expression in `t`.
    pub envelope: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Lattice,
    Regression,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Lattice => "lattice",
            Backend::Regression => "regression",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Explicit,
    FixedPoint,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsBlock {
    #[serde(default)]
    pub backend: Backend,
    #[serde(default = "NumericsBlock::default_steps")]
    pub steps: usize,
    #[serde(default = "NumericsBlock::default_paths")]
    pub paths: usize,
    #[serde(default = "NumericsBlock::default_degree")]
    pub degree: usize,
    #[serde(default)]
    pub seed: u64,
    pub mode: Option<ModeName>,
    #[serde(default = "NumericsBlock::default_theta_points")]
    pub theta_points: usize,
    /// Relative tolerance of the bound checks.
    #[serde(default = "NumericsBlock::default_tolerance")]
    pub tolerance: f64,
    pub energy_levels: Option<Vec<f64>>,
    pub localization_levels: Option<Vec<f64>>,
}

impl NumericsBlock {
    fn default_steps() -> usize {
        100
    }
    fn default_paths() -> usize {
        100_000
    }
    fn default_degree() -> usize {
        3
    }
    fn default_theta_points() -> usize {
        400
    }
    fn default_tolerance() -> f64 {
        1e-8
    }
}

impl Default for NumericsBlock {
    fn default() -> Self {
        Self {
            backend: Backend::default(),
            steps: Self::default_steps(),
            paths: Self::default_paths(),
            degree: Self::default_degree(),
            seed: 0,
            mode: None,
            theta_points: Self::default_theta_points(),
            tolerance: Self::default_tolerance(),
            energy_levels: None,
            localization_levels: None,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksBlock {
    /// Suite names for `verify`; all applicable suites when absent.
    pub suites: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthName {
    Lipschitz,
    Linear,
    Superlinear,
}

/// Reflected backward ODE `y_t = x + ∫φ(y) + k_T − k_t`, `y ≥ l`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RbodeBlock {
    pub terminal: f64,
    /// `φ`, expression in `y`.
    pub coefficient: String,
    pub growth: GrowthName,
    /// `μ` for the Lipschitz and linear classes.
    pub constant: Option<f64>,
    /// `l0`, expression in `y`, for the superlinear class.
    pub growth_bound: Option<String>,
    #[serde(default)]
    pub monotone: bool,
    /// `l`, expression in `t`.
    pub barrier: String,
    #[serde(default = "RbodeBlock::default_steps")]
    pub steps: usize,
    pub method: Option<String>,
}

impl RbodeBlock {
    fn default_steps() -> usize {
        1000
    }
}

/// `θ_t(x)` for the driver's certificate with barrier `e^{γ a_t}`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaBlock {
    pub x: f64,
    #[serde(default = "ThetaBlock::default_steps")]
    pub steps: usize,
}

impl ThetaBlock {
    fn default_steps() -> usize {
        1000
    }
}

fn parse(field: &'static str, text: &str, vars: &[Var]) -> Result<Arc<Expr>, ConfigError> {
    Expr::parse(text, vars)
        .map(Arc::new)
        .map_err(|source| ConfigError::Expr { field, source })
}

fn positive(name: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let file: Self = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: "<input>".into(),
            message: e.to_string(),
        })?;
        file.validate()?;
        Ok(file)
    }

    /// Shape checks that do not need the solvers.
    fn validate(&self) -> Result<(), ConfigError> {
        positive("horizon", self.horizon)?;
        if self.dimension == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        let n = &self.numerics;
        if n.steps == 0 {
            return Err(invalid("numerics.steps must be at least 1"));
        }
        positive("numerics.tolerance", n.tolerance)?;
        if n.theta_points < 2 {
            return Err(invalid("numerics.theta_points must be at least 2"));
        }
        if n.backend == Backend::Lattice && self.dimension != 1 {
            return Err(invalid("the lattice backend needs dimension = 1"));
        }
        if let Some(levels) = &n.energy_levels {
            if levels.iter().any(|v| !(*v > 0.0)) {
                return Err(invalid("numerics.energy_levels must be positive"));
            }
        }
        if let Some(t) = &self.terminal {
            if let Some(levels) = &t.truncation {
                if levels.is_empty() || levels.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(invalid("terminal.truncation must be nonempty and increasing"));
                }
            }
        }
        if let Some(suites) = &self.checks.suites {
            for s in suites {
                if !crate::commands::SUITES.contains(&s.as_str()) {
                    return Err(invalid(format!(
                        "unknown check suite `{s}` (known: {:?})",
                        crate::commands::SUITES
                    )));
                }
            }
        }
        if let Some(r) = &self.rbode {
            if let Some(m) = &r.method {
                m.parse::<Method>().map_err(invalid)?;
            }
            if r.steps == 0 {
                return Err(invalid("rbode.steps must be at least 1"));
            }
        }
        if let Some(d) = &self.driver {
            d.build(self.dimension)?;
        }
        if self.terminal.is_some() || self.barrier.is_some() {
            self.scenario_parts()?;
        }
        Ok(())
    }

    fn scenario_parts(&self) -> Result<[Arc<Expr>; 3], ConfigError> {
        let t = self
            .terminal
            .as_ref()
            .ok_or_else(|| invalid("missing [terminal] block"))?;
        let b = self
            .barrier
            .as_ref()
            .ok_or_else(|| invalid("missing [barrier] block"))?;
        Ok([
            parse("terminal.expression", &t.expression, &[Var::B])?,
            parse("barrier.expression", &b.expression, &[Var::T, Var::B])?,
            parse("barrier.envelope", &b.envelope, &[Var::T])?,
        ])
    }

    /// Deterministic envelope `a_t` sampled on `grid`.
    pub fn envelope_path(&self, grid: &TimeGrid) -> Result<ScalarPath, ConfigError> {
        let b = self
            .barrier
            .as_ref()
            .ok_or_else(|| invalid("missing [barrier] block"))?;
        let a = parse("barrier.envelope", &b.envelope, &[Var::T])?;
        Ok(ScalarPath::from_fn(grid, |t| a.eval(&Env { t, ..Env::default() })))
    }

    pub fn driver_block(&self) -> Result<&DriverBlock, ConfigError> {
        self.driver.as_ref().ok_or_else(|| invalid("missing [driver] block"))
    }

    /// The reflected BSDE scenario; `b` is the sum of the state components.
    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        let driver = self.driver_block()?.build(self.dimension)?;
        let [xi, l, a] = self.scenario_parts()?;
        Scenario::new(
            driver,
            move |s| {
                xi.eval(&Env {
                    b: s.iter().sum(),
                    ..Env::default()
                })
            },
            move |t, s| {
                l.eval(&Env {
                    t,
                    b: s.iter().sum(),
                    ..Env::default()
                })
            },
            move |t| a.eval(&Env { t, ..Env::default() }),
            self.horizon,
            self.dimension,
        )
        .map_err(|e| invalid(e.to_string()))
    }

    pub fn mode(&self, driver: &Driver) -> DriverMode {
        match self.numerics.mode {
            Some(ModeName::Explicit) => DriverMode::Explicit,
            Some(ModeName::FixedPoint) => DriverMode::FixedPoint,
            None => DriverMode::default_for(driver),
        }
    }

    pub fn rbode_block(&self) -> Result<&RbodeBlock, ConfigError> {
        self.rbode.as_ref().ok_or_else(|| invalid("missing [rbode] block"))
    }

    pub fn theta_block(&self) -> Result<&ThetaBlock, ConfigError> {
        self.theta.as_ref().ok_or_else(|| invalid("missing [theta] block"))
    }

    /// The reflected backward ODE problem and the requested method.
    pub fn rbode_problem(&self) -> Result<(RbodeProblem, Method), ConfigError> {
        let r = self.rbode_block()?;
        let phi = parse("rbode.coefficient", &r.coefficient, &[Var::Y])?;
        let growth = match r.growth {
            GrowthName::Lipschitz | GrowthName::Linear => {
                let mu = r
                    .constant
                    .ok_or_else(|| invalid("rbode.constant is required for the lipschitz and linear classes"))?;
                if !(mu >= 0.0 && mu.is_finite()) {
                    return Err(invalid(format!("rbode.constant must be nonnegative, got {mu}")));
                }
                if r.growth == GrowthName::Lipschitz {
                    GrowthClass::Lipschitz(mu)
                } else {
                    GrowthClass::Linear(mu)
                }
            }
            GrowthName::Superlinear => {
                let text = r
                    .growth_bound
                    .as_ref()
                    .ok_or_else(|| invalid("rbode.growth_bound is required for the superlinear class"))?;
                let l0 = parse("rbode.growth_bound", text, &[Var::Y])?;
                GrowthClass::Superlinear(Arc::new(move |y| l0.eval(&Env { y, ..Env::default() })))
            }
        };
        let method = match &r.method {
            Some(m) => m.parse::<Method>().map_err(invalid)?,
            None => match r.growth {
                GrowthName::Lipschitz => Method::Representation,
                GrowthName::Linear => Method::MonotoneMin,
                GrowthName::Superlinear => Method::Superlinear,
            },
        };
        let coef = Coefficient::new(move |y| phi.eval(&Env { y, ..Env::default() }), growth, r.monotone);
        let grid = TimeGrid::uniform(self.horizon, r.steps).map_err(|e| invalid(e.to_string()))?;
        let l = parse("rbode.barrier", &r.barrier, &[Var::T])?;
        let barrier = ScalarPath::from_fn(&grid, |t| l.eval(&Env { t, ..Env::default() }));
        let problem = RbodeProblem::new(grid, r.terminal, coef, barrier).map_err(|e| invalid(e.to_string()))?;
        Ok((problem, method))
    }
}

impl DriverBlock {
    fn reject(&self, kind: &str, fields: &[(&str, bool)]) -> Result<(), ConfigError> {
        for (name, present) in fields {
            if *present {
                return Err(invalid(format!("driver.{name} is not used by kind `{kind}`")));
            }
        }
        Ok(())
    }

    /// Builds the driver; `z` and `b` in expressions are component sums.
    pub fn build(&self, dimension: usize) -> Result<Driver, ConfigError> {
        positive("driver.gamma", self.gamma)?;
        let gamma = self.gamma;
        let custom_only = [
            ("expression", self.expression.is_some()),
            ("alpha", self.alpha.is_some()),
            ("beta", self.beta.is_some()),
            ("h", self.h.is_some()),
            ("lipschitz", self.lipschitz.is_some()),
        ];
        let coefs = [
            ("a", self.a.is_some()),
            ("b", self.b.is_some()),
            ("c", self.c.is_some()),
        ];
        match self.kind {
            DriverKind::Zero => {
                self.reject("zero", &custom_only)?;
                self.reject("zero", &coefs)?;
                self.reject("zero", &[("value", self.value.is_some())])?;
                Ok(Driver::zero(gamma))
            }
            DriverKind::Constant => {
                self.reject("constant", &custom_only)?;
                self.reject("constant", &coefs)?;
                let v = self
                    .value
                    .ok_or_else(|| invalid("driver.value is required for kind `constant`"))?;
                Ok(Driver::constant(v, gamma))
            }
            DriverKind::Linear => {
                self.reject("linear", &custom_only)?;
                self.reject("linear", &[("value", self.value.is_some())])?;
                let (a, b, c) = (self.a.unwrap_or(0.0), self.b.unwrap_or(0.0), self.c.unwrap_or(0.0));
                Ok(Driver::affine(a, b, c, gamma, dimension))
            }
            DriverKind::QuadraticZ => {
                self.reject("quadratic_z", &custom_only)?;
                self.reject(
                    "quadratic_z",
                    &[("value", self.value.is_some()), ("c", self.c.is_some())],
                )?;
                let (a, b) = (self.a.unwrap_or(0.0), self.b.unwrap_or(0.0));
                Ok(Driver::new(
                    move |_, y, z| a + b * y + 0.5 * gamma * z.iter().map(|q| q * q).sum::<f64>(),
                    Certificate::Linear {
                        alpha: a.abs(),
                        beta: b.abs(),
                        gamma,
                    },
                    None,
                ))
            }
            DriverKind::Custom => {
                self.reject("custom", &coefs)?;
                self.reject("custom", &[("value", self.value.is_some())])?;
                let text = self
                    .expression
                    .as_ref()
                    .ok_or_else(|| invalid("driver.expression is required for kind `custom`"))?;
                let f = parse("driver.expression", text, &[Var::T, Var::Y, Var::Z])?;
                let certificate = match (&self.h, self.alpha, self.beta) {
                    (Some(h), None, None) => {
                        let h = parse("driver.h", h, &[Var::Y])?;
                        let growth = SuperlinearGrowth::new(move |y| h.eval(&Env { y, ..Env::default() }), gamma)
                            .map_err(|e| invalid(format!("driver.h: {e}")))?;
                        Certificate::Superlinear(growth)
                    }
                    (None, alpha, beta) => {
                        let (alpha, beta) = (alpha.unwrap_or(0.0), beta.unwrap_or(0.0));
                        if !(alpha >= 0.0 && beta >= 0.0) {
                            return Err(invalid("driver.alpha and driver.beta must be nonnegative"));
                        }
                        Certificate::Linear { alpha, beta, gamma }
                    }
                    _ => return Err(invalid("give either driver.h or driver.alpha/beta, not both")),
                };
                if let Some(mu) = self.lipschitz {
                    if !(mu >= 0.0 && mu.is_finite()) {
                        return Err(invalid("driver.lipschitz must be nonnegative"));
                    }
                }
                Ok(Driver::new(
                    move |t, y, z| {
                        f.eval(&Env {
                            t,
                            y,
                            z: z.iter().sum(),
                            b: 0.0,
                        })
                    },
                    certificate,
                    self.lipschitz,
                ))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const QUADRATIC: &str = r#"
        name = "quadratic"
        [driver]
        kind = "quadratic_z"
        gamma = 1.0
        [terminal]
        expression = "b"
        [barrier]
        expression = "-20"
        envelope = "20"
        [numerics]
        steps = 200
    "#;

    #[test]
    fn parses_and_builds() {
        let f = ScenarioFile::from_toml(QUADRATIC).unwrap();
        let s = f.scenario().unwrap();
        assert_eq!(s.xi(&[0.3]), 0.3);
        assert_eq!(s.l(0.5, &[1.0]), -20.0);
        assert_eq!(s.driver.eval(0.0, 0.0, &[2.0]), 2.0);
        assert_eq!(f.numerics.steps, 200);
        assert_eq!(f.mode(&s.driver), DriverMode::FixedPoint);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = QUADRATIC.replace("steps = 200", "steps = 200\nstepz = 3");
        assert!(matches!(ScenarioFile::from_toml(&bad), Err(ConfigError::Parse { .. })));
        let bad = QUADRATIC.replace("gamma = 1.0", "gamma = 1.0\nvalue = 2.0");
        assert!(matches!(ScenarioFile::from_toml(&bad), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn expression_errors_name_the_field() {
        let bad = QUADRATIC.replace("expression = \"b\"", "expression = \"t\"");
        match ScenarioFile::from_toml(&bad) {
            Err(ConfigError::Expr { field, .. }) => assert_eq!(field, "terminal.expression"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn custom_superlinear_driver() {
        let text = r#"
            name = "custom"
            [driver]
            kind = "custom"
            expression = "(abs(y) + e) * ln(abs(y) + e) * 0.5"
            h = "(y + e) * ln(y + e)"
            [terminal]
            expression = "0"
            [barrier]
            expression = "-1"
            envelope = "1"
        "#;
        let f = ScenarioFile::from_toml(text).unwrap();
        let s = f.scenario().unwrap();
        assert!(matches!(s.driver.certificate(), Certificate::Superlinear(_)));
        s.driver.spot_check(1, 200, 5.0, 1.0, 1).unwrap();
    }

    #[test]
    fn rbode_block() {
        let text = r#"
            name = "rbode"
            [rbode]
            terminal = 1.0
            coefficient = "0.5 * y"
            growth = "lipschitz"
            constant = 0.5
            barrier = "1 - t"
            steps = 50
        "#;
        let f = ScenarioFile::from_toml(text).unwrap();
        let (p, m) = f.rbode_problem().unwrap();
        assert_eq!(m, Method::Representation);
        assert_eq!(p.grid.last(), 50);
        assert!(f.scenario().is_err());
    }

    #[test]
    fn lattice_needs_one_dimension() {
        let bad = QUADRATIC.replace("name = \"quadratic\"", "name = \"q\"\ndimension = 2");
        assert!(ScenarioFile::from_toml(&bad).is_err());
    }
}
