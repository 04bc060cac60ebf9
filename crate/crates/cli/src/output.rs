use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use merton_delay::{DerivedConstants, Scenario, SuiteConfig};
use serde::Serialize;

use crate::config::{Controls, Format};
use crate::error::{CliError, CliResult};

/// Column-ordered table; cells are already formatted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> CliResult<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Config(format!("csv: {e}"));
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row).map_err(io)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::Config(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_text(&self) -> String {
        let widths: Vec<usize> = (0..self.columns.len())
            .map(|i| {
                self.rows
                    .iter()
                    .map(|r| r[i].chars().count())
                    .chain([self.columns[i].chars().count()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut out = line(&self.columns);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }
}

/// Shortest representation that round-trips, in exponent form when tiny or huge.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

/// What a command reports: one main table and an overall verdict.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub table: Table,
    /// `None` when the command makes no pass/fail claim.
    pub passed: Option<bool>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn render(&self, format: Format) -> CliResult<String> {
        Ok(match format {
            Format::Text => {
                let mut s = self.table.to_text();
                for n in &self.notes {
                    s.push_str(n);
                    s.push('\n');
                }
                if let Some(p) = self.passed {
                    s.push_str(if p { "PASS\n" } else { "FAIL\n" });
                }
                s
            }
            Format::Csv => self.table.to_csv()?,
            Format::Json => json(self)? + "\n",
        })
    }
}

fn json<T: Serialize>(value: &T) -> CliResult<String> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::Config(format!("json: {e}")))
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstantsSummary {
    pub kappa: Vec<f64>,
    pub beta: f64,
    pub beta_inf: f64,
    pub beta_bar_inf: f64,
    pub g_inf: f64,
    pub h_inf_at_zero: f64,
    pub nu: f64,
    pub f_inf: f64,
    pub bequest_factor: f64,
    pub gamma_star_drift: f64,
    pub gamma_star_vol: Vec<f64>,
    pub income_decay_rate: f64,
}

impl From<&DerivedConstants> for ConstantsSummary {
    fn from(c: &DerivedConstants) -> Self {
        Self {
            kappa: c.kappa.iter().copied().collect(),
            beta: c.beta,
            beta_inf: c.beta_inf,
            beta_bar_inf: c.beta_bar_inf,
            g_inf: c.g_inf,
            h_inf_at_zero: c.h_inf[c.grid.m],
            nu: c.nu,
            f_inf: c.f_inf,
            bequest_factor: c.bequest_factor,
            gamma_star_drift: c.gamma_star_drift,
            gamma_star_vol: c.gamma_star_vol.iter().copied().collect(),
            income_decay_rate: c.income_decay_rate(),
        }
    }
}

/// Everything needed to reproduce a run. Contains no clock readings, so
/// identical inputs give identical bytes.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub library_version: &'static str,
    pub generator: &'static str,
    pub command: String,
    pub source: String,
    pub controls: Controls,
    /// Step and horizon the command actually used.
    pub resolved_dt: Option<f64>,
    pub resolved_horizon: Option<f64>,
    pub scenario: Scenario,
    pub constants: Option<ConstantsSummary>,
    pub violations: Vec<String>,
    pub suite: Option<SuiteConfig>,
    /// Set when the command stopped on an error.
    pub error: Option<String>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, source: &str, controls: &Controls, scenario: &Scenario) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            tool_version: env!("CARGO_PKG_VERSION"),
            library_version: merton_delay::VERSION,
            generator: merton_delay::rng::GENERATOR,
            command: command.to_string(),
            source: source.to_string(),
            controls: controls.clone(),
            resolved_dt: None,
            resolved_horizon: None,
            scenario: scenario.clone(),
            constants: None,
            violations: Vec::new(),
            suite: None,
            error: None,
            outputs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct RunInfo<'a> {
    command: &'a str,
    started_unix_seconds: u64,
    elapsed_seconds: f64,
    timings: &'a [(String, f64)],
}

/// Writes files into the output directory and remembers their names.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    pub fn create(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn text(&mut self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|source| CliError::Io { path, source })?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn csv(&mut self, name: &str, table: &Table) -> CliResult<()> {
        self.text(name, &table.to_csv()?)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        self.text(name, &(json(value)? + "\n"))
    }

    /// Manifest last, listing every file written before it.
    pub fn finish(
        mut self,
        mut manifest: Manifest,
        started: SystemTime,
        timings: &[(String, f64)],
    ) -> CliResult<()> {
        manifest.outputs = self.written.clone();
        let elapsed = started.elapsed().map(|d| d.as_secs_f64()).unwrap_or(0.0);
        let info = RunInfo {
            command: &manifest.command,
            started_unix_seconds: started
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            elapsed_seconds: elapsed,
            timings,
        };
        let info = json(&info)? + "\n";
        self.json("manifest.json", &manifest)?;
        self.text("run_info.json", &info)
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub const FAN_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Mean and quantiles of `values`, ignoring NaN.
pub fn fan_row(values: &mut Vec<f64>) -> Vec<f64> {
    values.retain(|v| !v.is_nan());
    values.sort_by(|a, b| a.total_cmp(b));
    let mean =
        merton_delay::quadrature::neumaier_sum(values.iter().copied()) / values.len().max(1) as f64;
    std::iter::once(mean)
        .chain(FAN_QUANTILES.iter().map(|q| quantile(values, *q)))
        .collect()
}
