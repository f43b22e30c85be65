//! Command-line entry point.
//!
//! Subcommands: `sweep`, `ode`, `window`, `selftest`. Exit codes: 0 on
//! success (for `selftest`, only when every suite passes), 1 when a selftest
//! suite fails, 2 on configuration or runtime errors.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pcbench::config::{self, Overrides, OUT_DIR_ENV};
use pcbench::ode::{run_ode_experiment, ODE_HEADER, ODE_SCHEMA};
use pcbench::output::{write_table, Field};
use pcbench::selftest::run_selftest;
use pcbench::sweep::{run_moment_sweep, SWEEP_HEADER, SWEEP_SCHEMA};
use pcbench::window::{run_window_sweep, WINDOW_HEADER, WINDOW_SCHEMA};
use polychaos::Result;

#[derive(Parser)]
#[command(
    name = "pcbench",
    version,
    about = "Benchmark runner for the polychaos surrogate library",
    after_help = "Configuration precedence: flags, then the PCBENCH_OUT_DIR environment \
                  variable (output directory only), then the --config file, then defaults."
)]
struct Cli {
    /// TOML config file (see the config module docs for the schema).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output directory for CSV and JSON artifacts.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Seed for sample grids and Monte Carlo references.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Approximation orders, comma separated (e.g. --kappa 1,2,3).
    #[arg(long, global = true, value_delimiter = ',', value_name = "K,...")]
    kappa: Option<Vec<usize>>,

    /// Restrict the sweep to one candidate function id.
    #[arg(long, global = true, value_name = "ID")]
    function: Option<String>,

    /// Restrict the sweep to one solver method id.
    #[arg(long, global = true, value_name = "ID")]
    method: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Moment-error sweep across orders and solver methods.
    Sweep,
    /// ODE moment tracking: surrogate propagator vs windowed propagator.
    Ode {
        /// Benchmark system: linear or nonlinear.
        #[arg(long, value_name = "ID")]
        system: Option<String>,
    },
    /// Window-length study for the windowed propagator.
    Window,
    /// Run the library invariant suites; exit code 0 iff all pass.
    Selftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("pcbench: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let system = match &cli.command {
        Command::Ode { system } => system.clone(),
        _ => None,
    };
    let overrides = Overrides {
        out: cli.out,
        seed: cli.seed,
        kappas: cli.kappa,
        function: cli.function,
        method: cli.method,
        system,
    };
    let env_out = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
    let cfg = config::load(cli.config.as_deref(), overrides, env_out)?;

    match cli.command {
        Command::Sweep => {
            let rows = run_moment_sweep(&cfg.sweep_settings()?)?;
            let fields: Vec<Vec<Field>> = rows.iter().map(|r| r.to_fields()).collect();
            let path = cfg.out_dir().join("sweep.csv");
            write_table(&path, SWEEP_SCHEMA, &SWEEP_HEADER, &fields)?;
            println!("wrote {} rows to {}", rows.len(), path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Ode { .. } => {
            let settings = cfg.ode_settings()?;
            let outcome = run_ode_experiment(&settings)?;
            for (kappa, steps) in &outcome.fallback_steps {
                eprintln!(
                    "kappa {kappa}: {} degenerate window(s) fell back to surrogate steps \
                     (first at step {})",
                    steps.len(),
                    steps[0]
                );
            }
            let fields: Vec<Vec<Field>> = outcome.rows.iter().map(|r| r.to_fields()).collect();
            let path = cfg
                .out_dir()
                .join(format!("ode-{}.csv", settings.system.id()));
            write_table(&path, ODE_SCHEMA, &ODE_HEADER, &fields)?;
            println!("wrote {} rows to {}", outcome.rows.len(), path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Window => {
            let rows = run_window_sweep(&cfg.window_settings()?)?;
            let fields: Vec<Vec<Field>> = rows.iter().map(|r| r.to_fields()).collect();
            let path = cfg.out_dir().join("window.csv");
            write_table(&path, WINDOW_SCHEMA, &WINDOW_HEADER, &fields)?;
            println!("wrote {} rows to {}", rows.len(), path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest => {
            let report = run_selftest(cfg.seed());
            fs::create_dir_all(cfg.out_dir())?;
            let path = cfg.out_dir().join("selftest.json");
            let json = report.to_json();
            fs::write(&path, format!("{json}\n"))?;
            println!("{json}");
            Ok(if report.all_passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}
