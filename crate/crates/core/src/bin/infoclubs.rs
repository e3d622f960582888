use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use infoclubs::cli::{self, CliError, Command, Overrides, Scenario};
use infoclubs::SolveMethod;

#[derive(Parser)]
#[command(name = "infoclubs", version, about = "Truthful communication and information clubs on networks")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Truthful linear equilibrium, FOC residual and method agreement.
    Solve(Common),
    /// Optimal misreporting per sender; exits 2 when truthful reporting fails.
    CheckIc(Common),
    /// Recursive assortative clique partition with per-block payoffs.
    Form(Common),
    /// Core check of the scenario partition (or the recursive one).
    Core(Common),
    /// Welfare-maximizing partition and its gap to the core partition.
    Welfare(Common),
    /// Monte Carlo payoffs of the truthful equilibrium.
    Simulate(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    #[value(name = "fixed_point")]
    FixedPoint,
    Direct,
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Tolerance (falls back to the scenario, then INFOCLUBS_TOL, then the built-in default).
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

fn execute(command: Command, args: &Common) -> Result<i32, CliError> {
    let scenario = Scenario::load(&args.scenario)?;
    let overrides = Overrides {
        tol: args.tol,
        samples: args.samples,
        seed: args.seed,
        method: args.method.map(|m| match m {
            Method::FixedPoint => SolveMethod::FixedPoint,
            Method::Direct => SolveMethod::Direct,
        }),
        env_tol: cli::env_tolerance()?,
    };
    let report = cli::run(command, &scenario, &overrides)?;
    let text = match args.format {
        Format::Json => report.to_json(),
        Format::Csv => cli::to_csv(&report, &scenario)?,
    };
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
        None => print!("{text}"),
    }
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors share the invalid-input code; 2 is reserved for failed incentive checks.
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    let (command, args) = match &cli.command {
        Cmd::Solve(a) => (Command::Solve, a),
        Cmd::CheckIc(a) => (Command::CheckIc, a),
        Cmd::Form(a) => (Command::Form, a),
        Cmd::Core(a) => (Command::Core, a),
        Cmd::Welfare(a) => (Command::Welfare, a),
        Cmd::Simulate(a) => (Command::Simulate, a),
    };
    match execute(command, args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
