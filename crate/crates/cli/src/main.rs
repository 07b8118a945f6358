//! `majorant` command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use majorant::commands::{
    run_certify, run_dominate, run_region, CommandError, Overrides, EXIT_CHECK_FAILED, EXIT_PASS,
    EXIT_USAGE,
};
use majorant::scenarios::Scenario;

#[derive(Parser, Debug)]
#[command(
    name = "majorant",
    version,
    about = "Scalar majorant bounds for vector delay systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check |x(t)| <= y(t) <= y_hat(t) and write domination.csv and report.json.
    Dominate {
        #[command(flatten)]
        common: Common,
        /// End of the simulation window (defaults to the scenario's t_end).
        #[arg(long)]
        t_end: Option<f64>,
        /// Swap the x_norm and y_hat columns; the check must then fail.
        #[arg(long)]
        swap_columns: bool,
    },
    /// Estimate the polar boundary and the embedded disks; write boundary.csv and disks.csv.
    Region {
        #[command(flatten)]
        common: Common,
        /// Angle step in radians (defaults to the scenario's, pi/100 unless set).
        #[arg(long)]
        angle_step: Option<f64>,
        /// First radius of every ray search.
        #[arg(long)]
        seed_radius: Option<f64>,
    },
    /// Print a stability verdict from the closed-form criterion or the linearized search.
    Certify {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario file (TOML).
    scenario: PathBuf,
    /// Relative solver tolerance; the absolute tolerance is tol * 1e-3.
    #[arg(long)]
    tol: Option<f64>,
    /// Horizon of region and certificate runs.
    #[arg(long)]
    horizon: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            tol: self.tol,
            horizon: self.horizon,
            ..Default::default()
        }
    }
}

fn print_json(text: serde_json::Result<String>) {
    match text {
        Ok(s) => {
            let _ = writeln!(std::io::stdout(), "{s}");
        }
        Err(e) => eprintln!("error: cannot format summary: {e}"),
    }
}

fn load(path: &Path) -> Result<Scenario, CommandError> {
    Ok(Scenario::load(path)?)
}

fn run(cli: Cli) -> Result<bool, CommandError> {
    match cli.command {
        Command::Dominate {
            common,
            t_end,
            swap_columns,
        } => {
            let scenario = load(&common.scenario)?;
            let overrides = Overrides {
                t_end,
                ..common.overrides()
            };
            let summary = run_dominate(&scenario, &overrides, swap_columns, &common.out)?;
            print_json(serde_json::to_string_pretty(&summary));
            Ok(summary.passed)
        }
        Command::Region {
            common,
            angle_step,
            seed_radius,
        } => {
            let scenario = load(&common.scenario)?;
            let overrides = Overrides {
                angle_step,
                seed_radius,
                ..common.overrides()
            };
            let summary = run_region(&scenario, &overrides, &common.out)?;
            print_json(serde_json::to_string_pretty(&summary));
            Ok(summary.passed)
        }
        Command::Certify { common } => {
            let scenario = load(&common.scenario)?;
            let summary = run_certify(&scenario, &common.overrides(), Some(&common.out))?;
            print_json(serde_json::to_string_pretty(&summary));
            Ok(summary.passed)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_PASS
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::from(EXIT_PASS as u8),
        Ok(false) => ExitCode::from(EXIT_CHECK_FAILED as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
