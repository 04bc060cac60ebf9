use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use merton_delay::{Past, Scenario};
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const DEFAULT_SEED: u64 = 20_240_601;
pub const DEFAULT_DT: f64 = 1.0 / 250.0;
pub const DEFAULT_HORIZON: f64 = 60.0;
pub const DEFAULT_PATHS: usize = 20_000;
pub const DEFAULT_OUT_DIR: &str = "out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Constant-kernel desk scenario, γ = 0.5.
    Desk,
    /// Constant-kernel desk scenario, γ = 2.
    DeskHigh,
    /// No delay, no income risk, no risk premium.
    Baseline,
    /// Violates β − β̄∞ > 0.
    DelayDominated,
    /// Violates the ν denominator condition.
    Impatient,
}

impl Preset {
    pub fn scenario(self) -> Scenario {
        match self {
            Preset::Desk => Scenario::desk(0.5),
            Preset::DeskHigh => Scenario::desk(2.0),
            Preset::Baseline => Scenario::baseline(),
            Preset::DelayDominated => Scenario::delay_dominated(),
            Preset::Impatient => Scenario::impatient(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Text,
    Csv,
    Json,
}

/// Options shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Scenario file, TOML or JSON (by extension). Defaults to the desk preset.
    pub scenario: Option<PathBuf>,
    /// Built-in scenario instead of a file.
    #[arg(long, value_enum, conflicts_with = "scenario")]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Time step in years.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Simulation horizon in years.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Number of Monte Carlo paths.
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Format of the report printed to stdout.
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

/// Run controls after applying flags over file values over defaults.
/// `dt` and `horizon` stay optional so commands can choose their own.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Controls {
    pub seed: u64,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub n_paths: usize,
    pub out_dir: PathBuf,
}

impl Controls {
    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(DEFAULT_DT)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon.unwrap_or(DEFAULT_HORIZON)
    }
}

pub struct Loaded {
    pub scenario: Scenario,
    pub controls: Controls,
    /// Where the scenario came from.
    pub source: String,
}

pub fn parse_scenario(text: &str, path: &Path) -> CliResult<Scenario> {
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let parsed = if is_json {
        serde_json::from_str(text).map_err(|e| e.to_string())
    } else {
        toml::from_str(text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn load(common: &Common) -> CliResult<Loaded> {
    let (scenario, source) = match (&common.scenario, common.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            (parse_scenario(&text, path)?, path.display().to_string())
        }
        (None, Some(p)) => (
            p.scenario(),
            format!(
                "preset:{}",
                p.to_possible_value().expect("named").get_name()
            ),
        ),
        (None, None) => (Preset::Desk.scenario(), "preset:desk".to_string()),
    };
    let run = &scenario.run;
    let controls = Controls {
        seed: common.seed.or(run.seed).unwrap_or(DEFAULT_SEED),
        dt: common.dt.or(run.dt),
        horizon: common.horizon.or(run.horizon),
        n_paths: common.paths.or(run.n_paths).unwrap_or(DEFAULT_PATHS),
        out_dir: common
            .out_dir
            .clone()
            .or_else(|| run.out_dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| DEFAULT_OUT_DIR.into()),
    };
    check_controls(&controls)?;
    Ok(Loaded {
        scenario,
        controls,
        source,
    })
}

fn check_controls(c: &Controls) -> CliResult<()> {
    if let Some(dt) = c.dt {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(CliError::Config(format!("dt must be positive, got {dt}")));
        }
    }
    if let Some(h) = c.horizon {
        if !(h >= 0.0 && h.is_finite()) {
            return Err(CliError::Config(format!(
                "horizon must be non-negative, got {h}"
            )));
        }
    }
    if c.n_paths == 0 {
        return Err(CliError::Config("paths must be at least 1".into()));
    }
    Ok(())
}

/// Replaces the scenario's income history with `m + 1` values read from a
/// one-column CSV (an optional header line is skipped).
pub fn apply_history(loaded: &mut Loaded, path: &Path) -> CliResult<()> {
    let err = |msg: String| CliError::Config(format!("{}: {msg}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| err(e.to_string()))?;
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| err(e.to_string()))?;
        let field = record.get(0).unwrap_or_default();
        match field.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(err(format!("line {}: not a number: {field:?}", i + 1))),
        }
    }
    let m = loaded.scenario.income.m;
    if values.len() != m + 1 {
        return Err(err(format!(
            "expected {} values, found {}",
            m + 1,
            values.len()
        )));
    }
    let x0 = values.pop().expect("non-empty");
    loaded.scenario.initial.x0 = x0;
    loaded.scenario.initial.past = Past::Values(values);
    loaded.source = format!("{} + history {}", loaded.source, path.display());
    Ok(())
}
