//! `range-sim`: run, sweep, plan and validate from JSON configs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use range_core::harness::{
    plan_table, run_experiment, run_sweep, sweep_csv, validate_bounds, validation_table, write_outputs,
    BoundsGrid, PlanConfig, RunConfig, SweepGrid,
};
use range_core::{Error, Result};

#[derive(Parser)]
#[command(name = "range-sim", version, about = "Byzantine-robust distributed optimization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one run and write metrics.csv, summary.json and timing.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; overrides the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Execute a grid of runs and write one summary CSV.
    Sweep {
        #[arg(long)]
        grid: PathBuf,
        /// CSV path; defaults to the grid's `output`, else stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print failure bounds and theorem constants for a parameter choice.
    Plan {
        #[arg(long)]
        config: PathBuf,
    },
    /// Monte Carlo check of the failure probabilities.
    ValidateBounds {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let mut cfg = RunConfig::from_path(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.output = Some(o);
            }
            let dir = cfg
                .output
                .clone()
                .ok_or_else(|| Error::Config("no output directory: pass --out or set `output`".into()))?;
            let result = run_experiment(&cfg)?;
            write_outputs(&result, &dir)?;
            println!("{}", serde_json::to_string_pretty(&result.summary)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { grid, out } => {
            let g = SweepGrid::from_path(&grid)?;
            let report = run_sweep(&g)?;
            let csv = sweep_csv(&report.rows);
            match out.or(g.output.clone()) {
                Some(path) => {
                    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                        std::fs::create_dir_all(parent)?;
                    }
                    std::fs::write(&path, &csv)?;
                    print!("{csv}");
                }
                None => print!("{csv}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Plan { config } => {
            let cfg = PlanConfig::from_path(&config)?;
            let (inputs, report) = cfg.report()?;
            let doc = serde_json::json!({ "inputs": inputs, "report": report });
            println!("{doc:#}");
            println!();
            print!("{}", plan_table(&inputs, &report));
            Ok(ExitCode::SUCCESS)
        }
        Command::ValidateBounds { grid, samples, out } => {
            let g = BoundsGrid::from_path(&grid)?;
            let report = validate_bounds(&g, samples)?;
            let json = serde_json::to_string_pretty(&report)?;
            if let Some(path) = out {
                std::fs::write(path, format!("{json}\n"))?;
            }
            print!("{}", validation_table(&report));
            println!("all checks passed: {}", report.all_pass);
            Ok(if report.all_pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
