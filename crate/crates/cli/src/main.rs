use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rbsde_cli::commands::EXIT_CONFIG;
use rbsde_cli::{run, Backend, Command, Options};

#[derive(Parser)]
#[command(
    name = "rbsde-lab",
    version,
    about = "Reflected BSDE and reflected ODE solvers with verification suites"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Solve the reflected backward ODE of the [rbode] block.
    SolveRbode(Common),
    /// Solve θ_t(x) for the [theta] block.
    SolveTheta(Common),
    /// Solve the reflected BSDE and write the per-step profile.
    SolveRbsde(Common),
    /// Solve and run the verification suites.
    Verify(Common),
    /// Write lower barrier, solution and a-priori upper bound per step.
    Bound(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Overrides numerics.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides numerics.backend.
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Fail on α < β/γ and on barriers outside the positive band.
    #[arg(long)]
    strict_assumptions: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Lattice,
    Regression,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let (command, common) = match cli.command {
        Sub::SolveRbode(c) => (Command::SolveRbode, c),
        Sub::SolveTheta(c) => (Command::SolveTheta, c),
        Sub::SolveRbsde(c) => (Command::SolveRbsde, c),
        Sub::Verify(c) => (Command::Verify, c),
        Sub::Bound(c) => (Command::Bound, c),
    };
    let options = Options {
        config: common.config,
        out: common.out,
        seed: common.seed,
        backend: common.backend.map(|b| match b {
            BackendArg::Lattice => Backend::Lattice,
            BackendArg::Regression => Backend::Regression,
        }),
        strict_assumptions: common.strict_assumptions,
    };
    let report = run(command, &options);
    for c in &report.checks {
        let verdict = match (c.pass, c.enforced) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "WARN",
        };
        println!(
            "{verdict} {} (margin {:?}, tolerance {:?})",
            c.name, c.margin, c.tolerance
        );
    }
    for s in &report.skipped {
        println!("SKIP {}: {}", s.suite, s.reason);
    }
    if let Some(y0) = report.y0 {
        println!("y0 = {y0}");
    }
    if let Some(e) = &report.error {
        eprintln!("error in {}::{}: {}", e.module, e.operation, e.message);
    }
    ExitCode::from(report.exit_code as u8)
}
