use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use openfluid::config::Scenario;
use openfluid::runner::{self, RunStatus};
use openfluid::snapshot::write_atomic;
use openfluid::verify::{self, Suite};
use openfluid::Error;

/// Open-system fluid laboratory: runs scenarios, audits budgets and checks identities.
#[derive(Parser)]
#[command(name = "openfluid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario and write time series, snapshots and a summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a verification suite: budgets, bracket, legendre, stress_tables, material or all.
    Verify {
        suite: String,
        #[arg(long)]
        config: PathBuf,
        /// Directory for verdicts.json and suite artifacts.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print JSON verdicts instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// Refine the grid `levels` times and fit the order of each budget residual.
    Converge {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        levels: usize,
        /// Directory for convergence.json.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

const VERIFY_FAILED: u8 = 1;
const CONFIG_ERROR: u8 = 2;
const NUMERICAL_ABORT: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numerical(_) | Error::Cfl { .. } | Error::Degenerate(_) => NUMERICAL_ABORT,
        _ => CONFIG_ERROR,
    }
}

fn write_json(dir: &Path, name: &str, value: &impl serde::Serialize) -> openfluid::Result<()> {
    fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    write_atomic(&dir.join(name), text.as_bytes())
}

fn run(cmd: Command) -> openfluid::Result<u8> {
    match cmd {
        Command::Run { config, out } => {
            let sc = Scenario::load(&config)?;
            let rec = runner::run_scenario(&sc, &out)?;
            println!(
                "{} steps to t = {:e} ({} rows) -> {}",
                rec.steps,
                rec.t_final,
                rec.rows,
                out.display()
            );
            Ok(if rec.status == RunStatus::Completed {
                0
            } else {
                NUMERICAL_ABORT
            })
        }
        Command::Verify {
            suite,
            config,
            out,
            json,
        } => {
            let suite: Suite = suite.parse()?;
            let sc = Scenario::load(&config)?;
            let reports = verify::run_suite(suite, &sc)?;
            if let Some(dir) = &out {
                write_json(dir, "verdicts.json", &reports)?;
                for (name, body) in reports.iter().flat_map(|r| &r.artifacts) {
                    write_atomic(&dir.join(name), body.as_bytes())?;
                }
            }
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&reports)
                        .map_err(|e| Error::Config(e.to_string()))?
                );
            } else {
                print!("{}", verify::render(&reports));
            }
            Ok(if reports.iter().all(|r| r.pass) {
                0
            } else {
                VERIFY_FAILED
            })
        }
        Command::Converge {
            config,
            levels,
            out,
            json,
        } => {
            if levels < 3 {
                return Err(Error::Config(format!(
                    "--levels must be at least 3, got {levels}"
                )));
            }
            let sc = Scenario::load(&config)?;
            let table = runner::convergence_study(&sc, levels)?;
            if let Some(dir) = &out {
                write_json(dir, "convergence.json", &table)?;
            }
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&table)
                        .map_err(|e| Error::Config(e.to_string()))?
                );
            } else {
                print!("{}", table.render());
            }
            Ok(if table.pass { 0 } else { VERIFY_FAILED })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("openfluid: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
