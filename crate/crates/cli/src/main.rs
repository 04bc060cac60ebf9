//! Command-line front end: validate scenarios, simulate, and run the checks.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::SystemTime;

use clap::{Parser, Subcommand};

use commands::{Context, Outcome};
use config::{Common, Loaded};
use error::{CliError, CliResult};
use output::{Manifest, Outputs};

#[derive(Debug, Parser)]
#[command(
    name = "merton-delay",
    version,
    about = "Consumption and portfolio choice with delayed labor income"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the hypotheses and print the derived constants.
    Validate(Common),
    /// Simulate labor income paths.
    SimulateIncome {
        #[command(flatten)]
        common: Common,
        /// Full-resolution paths written to income_paths.csv.
        #[arg(long, default_value_t = 5)]
        sample_paths: usize,
        /// Add the Brownian increments to income_paths.csv.
        #[arg(long)]
        with_increments: bool,
    },
    /// Closed-form human capital against its Monte Carlo oracle.
    HumanCapital {
        #[command(flatten)]
        common: Common,
        /// CSV of m+1 income values on the delay grid, oldest first; the
        /// last one is the current income. Overrides the scenario's history.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Simulate wealth and income under the optimal feedback policy.
    PolicySim {
        #[command(flatten)]
        common: Common,
        /// Full-resolution paths written to policy_paths.csv.
        #[arg(long, default_value_t = 5)]
        sample_paths: usize,
    },
    /// Monte Carlo objective against the closed-form value.
    ValueCheck {
        #[command(flatten)]
        common: Common,
        /// Multiple of the optimal consumption rate.
        #[arg(long, default_value_t = 1.0)]
        consumption_scale: f64,
    },
    /// Portfolio and total-wealth wedges against the same scenario without delay.
    Benchmark(Common),
    /// Run every acceptance check.
    Suite(Common),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate(_) => "validate",
            Command::SimulateIncome { .. } => "simulate-income",
            Command::HumanCapital { .. } => "human-capital",
            Command::PolicySim { .. } => "policy-sim",
            Command::ValueCheck { .. } => "value-check",
            Command::Benchmark(_) => "benchmark",
            Command::Suite(_) => "suite",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Validate(c) | Command::Benchmark(c) | Command::Suite(c) => c,
            Command::SimulateIncome { common, .. }
            | Command::HumanCapital { common, .. }
            | Command::PolicySim { common, .. }
            | Command::ValueCheck { common, .. } => common,
        }
    }

    fn run(&self, ctx: &mut Context) -> CliResult<Outcome> {
        match self {
            Command::Validate(_) => commands::validate_cmd(ctx),
            Command::SimulateIncome {
                sample_paths,
                with_increments,
                ..
            } => commands::simulate_income_cmd(ctx, *sample_paths, *with_increments),
            Command::HumanCapital { .. } => commands::human_capital_cmd(ctx),
            Command::PolicySim { sample_paths, .. } => commands::policy_sim_cmd(ctx, *sample_paths),
            Command::ValueCheck {
                consumption_scale, ..
            } => commands::value_check_cmd(ctx, *consumption_scale),
            Command::Benchmark(_) => commands::benchmark_cmd(ctx),
            Command::Suite(_) => commands::suite_cmd(ctx),
        }
    }
}

fn execute(cmd: &Command) -> CliResult<()> {
    let started = SystemTime::now();
    let common = cmd.common();
    let mut loaded: Loaded = config::load(common)?;
    if let Command::HumanCapital {
        history: Some(path),
        ..
    } = cmd
    {
        config::apply_history(&mut loaded, path)?;
    }
    let mut out = Outputs::create(&loaded.controls.out_dir)?;
    let mut ctx = Context {
        command: cmd.name(),
        loaded: &loaded,
        out: &mut out,
        format: common.format,
    };
    match cmd.run(&mut ctx) {
        Ok(outcome) => {
            let text = commands::emit(&mut ctx, &outcome)?;
            let failure = outcome.failure();
            out.finish(outcome.manifest, started, &outcome.timings)?;
            print!("{text}");
            failure.map_or(Ok(()), Err)
        }
        Err(e) => {
            let mut manifest = Manifest::new(
                cmd.name(),
                &loaded.source,
                &loaded.controls,
                &loaded.scenario,
            );
            if let CliError::Validation(report) = &e {
                manifest.violations = report.violations.iter().map(|v| v.to_string()).collect();
            }
            manifest.error = Some(e.to_string());
            out.finish(manifest, started, &[])?;
            Err(e)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::CheckFailed(_)) => ExitCode::from(e.exit_code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
