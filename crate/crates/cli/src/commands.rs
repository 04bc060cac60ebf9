use std::time::Instant;

use merton_delay::estimate::map_paths;
use merton_delay::income::{simulate_income, step_count, substeps};
use merton_delay::objective::{
    run_objective, scaled_policy_value, utility_decay_rate, value_function,
};
use merton_delay::policy::{simulate_closed_loop, ClosedLoop};
use merton_delay::rng::{fill_increments, path_rng};
use merton_delay::suite::GAMMAS;
use merton_delay::valuation::human_capital_horizon;
use merton_delay::{
    benchmark_wedges, human_capital, human_capital_mc_oracle, run_suite, validate, BrownianPath,
    DerivedConstants, LoopConfig, Region, Resolved, SeedRecord, SuiteConfig, ValidationConfig,
    ValidationReport,
};

use crate::config::{Format, Loaded};
use crate::error::{CliError, CliResult};
use crate::output::{
    fan_row, num, ConstantsSummary, Manifest, Outputs, Report, Table, FAN_QUANTILES,
};

/// Result of a command: its report plus what goes into the manifest.
pub struct Outcome {
    pub report: Report,
    pub manifest: Manifest,
    pub timings: Vec<(String, f64)>,
    /// Hypothesis violations found by `validate`.
    pub violations: Option<ValidationReport>,
}

impl Outcome {
    fn new(report: Report, manifest: Manifest, timings: Vec<(String, f64)>) -> Self {
        Self {
            report,
            manifest,
            timings,
            violations: None,
        }
    }

    /// The error the process should exit with, if the report failed.
    pub fn failure(&self) -> Option<CliError> {
        if let Some(v) = &self.violations {
            return Some(CliError::Validation(v.clone()));
        }
        match self.report.passed {
            Some(false) => Some(CliError::CheckFailed(self.report.table.to_text())),
            _ => None,
        }
    }
}

pub struct Context<'a> {
    pub command: &'static str,
    pub loaded: &'a Loaded,
    pub out: &'a mut Outputs,
    pub format: Format,
}

impl Context<'_> {
    fn manifest(&self) -> Manifest {
        Manifest::new(
            self.command,
            &self.loaded.source,
            &self.loaded.controls,
            &self.loaded.scenario,
        )
    }

    fn resolve(&self) -> CliResult<Resolved> {
        Ok(Resolved::new(&self.loaded.scenario)?)
    }
}

fn fan_columns(lead: &[&str]) -> Vec<String> {
    lead.iter()
        .map(|s| s.to_string())
        .chain(["mean".to_string()])
        .chain(
            FAN_QUANTILES
                .iter()
                .map(|q| format!("p{:02}", (q * 100.0).round() as u32)),
        )
        .collect()
}

/// Step indices kept for fan charts: at most about 500 plus the last.
fn recorded_steps(steps: usize) -> Vec<usize> {
    let every = steps.div_ceil(500).max(1);
    let mut idx: Vec<usize> = (0..=steps).step_by(every).collect();
    if *idx.last().unwrap_or(&0) != steps {
        idx.push(steps);
    }
    idx
}

pub fn validate_cmd(ctx: &mut Context) -> CliResult<Outcome> {
    let params = ctx.loaded.scenario.params()?;
    ctx.loaded.scenario.past()?;
    let mut manifest = ctx.manifest();
    match validate(&params, &ValidationConfig::default()) {
        Err(report) => {
            let mut table = Table::new(&["violation", "condition", "detail"]);
            for v in &report.violations {
                let text = v.to_string();
                let name = text.split(':').next().unwrap_or_default().to_string();
                table.push(vec![name, v.condition().to_string(), text]);
            }
            manifest.violations = report.violations.iter().map(|v| v.to_string()).collect();
            let mut outcome = Outcome::new(
                Report {
                    command: ctx.command.into(),
                    table,
                    passed: Some(false),
                    notes: Vec::new(),
                },
                manifest,
                Vec::new(),
            );
            outcome.violations = Some(report);
            Ok(outcome)
        }
        Ok(()) => {
            let consts = DerivedConstants::new(&params)?;
            let s = ConstantsSummary::from(&consts);
            let mut table = Table::new(&["quantity", "value"]);
            for (i, k) in s.kappa.iter().enumerate() {
                table.push(vec![format!("kappa_{}", i + 1), num(*k)]);
            }
            for (name, value) in [
                ("beta", s.beta),
                ("beta_inf", s.beta_inf),
                ("beta_bar_inf", s.beta_bar_inf),
                ("g_inf", s.g_inf),
                ("1/beta", 1.0 / s.beta),
                ("h_inf(0)", s.h_inf_at_zero),
                ("nu", s.nu),
                ("f_inf", s.f_inf),
                ("bequest_factor", s.bequest_factor),
                ("gamma_star_drift", s.gamma_star_drift),
                ("income_decay_rate", s.income_decay_rate),
            ] {
                table.push(vec![name.to_string(), num(value)]);
            }
            for (i, v) in s.gamma_star_vol.iter().enumerate() {
                table.push(vec![format!("gamma_star_vol_{}", i + 1), num(*v)]);
            }
            manifest.constants = Some(s);
            Ok(Outcome::new(
                Report {
                    command: ctx.command.into(),
                    table,
                    passed: Some(true),
                    notes: Vec::new(),
                },
                manifest,
                Vec::new(),
            ))
        }
    }
}

struct IncomeSample {
    recorded: Vec<f64>,
    full: Option<(Vec<f64>, BrownianPath)>,
    crossings: usize,
    min: f64,
}

pub fn simulate_income_cmd(
    ctx: &mut Context,
    sample_paths: usize,
    with_increments: bool,
) -> CliResult<Outcome> {
    let r = ctx.resolve()?;
    let c = &ctx.loaded.controls;
    let (dt, horizon) = (c.dt(), c.horizon());
    substeps(dt, r.params.income.grid.ds())?;
    let steps = step_count(horizon, dt)?;
    let rec = recorded_steps(steps);
    let clock = Instant::now();
    let samples = map_paths(c.n_paths, |j| {
        simulate_income(
            &r.params.income,
            r.x0(),
            &r.past,
            horizon,
            dt,
            SeedRecord::new(c.seed, j as u64),
        )
        .map(|(path, brownian)| IncomeSample {
            recorded: rec.iter().map(|&k| path.y[k]).collect(),
            min: path.min(),
            crossings: path.sign_crossings,
            full: (j < sample_paths).then_some((path.y, brownian)),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let seconds = clock.elapsed().as_secs_f64();

    let mut fan = Table {
        columns: fan_columns(&["t"]),
        rows: Vec::new(),
    };
    for (i, &k) in rec.iter().enumerate() {
        let mut col: Vec<f64> = samples.iter().map(|s| s.recorded[i]).collect();
        fan.push(
            std::iter::once(num(k as f64 * dt))
                .chain(fan_row(&mut col).into_iter().map(num))
                .collect(),
        );
    }
    let n = r.consts.n();
    let mut columns = vec!["path".to_string(), "t".into(), "y".into()];
    if with_increments {
        columns.extend((1..=n).map(|i| format!("dz_{i}")));
    }
    let mut paths = Table {
        columns,
        rows: Vec::new(),
    };
    for (j, s) in samples.iter().enumerate() {
        let Some((y, brownian)) = &s.full else {
            continue;
        };
        for (k, y) in y.iter().enumerate() {
            let mut row = vec![j.to_string(), num(k as f64 * dt), num(*y)];
            if with_increments {
                // increment over [t, t + dt]; empty on the last row
                row.extend((0..n).map(|i| {
                    if k < steps {
                        num(brownian.increment(k)[i])
                    } else {
                        String::new()
                    }
                }));
            }
            paths.push(row);
        }
    }
    ctx.out.csv("income_fan.csv", &fan)?;
    ctx.out.csv("income_paths.csv", &paths)?;

    let crossings: usize = samples.iter().map(|s| s.crossings).sum();
    let with_crossings = samples.iter().filter(|s| s.crossings > 0).count();
    let min = samples.iter().map(|s| s.min).fold(f64::INFINITY, f64::min);
    let positivity_expected =
        r.params.income.kernel.is_nonnegative() && r.x0() > 0.0 && r.past.iter().all(|v| *v >= 0.0);
    let mut table = Table::new(&[
        "n_paths",
        "dt",
        "horizon",
        "sign_crossings",
        "paths_with_crossings",
        "min_y",
    ]);
    table.push(vec![
        c.n_paths.to_string(),
        num(dt),
        num(horizon),
        crossings.to_string(),
        with_crossings.to_string(),
        num(min),
    ]);
    let notes = if positivity_expected {
        vec!["positivity expected: x0 > 0, past >= 0, kernel >= 0".to_string()]
    } else {
        vec!["positivity not guaranteed for these inputs; crossings are reported only".to_string()]
    };
    let mut manifest = ctx.manifest();
    manifest.resolved_dt = Some(dt);
    manifest.resolved_horizon = Some(horizon);
    manifest.constants = Some(ConstantsSummary::from(&r.consts));
    Ok(Outcome::new(
        Report {
            command: ctx.command.into(),
            table,
            passed: positivity_expected.then_some(crossings == 0),
            notes,
        },
        manifest,
        vec![("simulation".into(), seconds)],
    ))
}

pub fn human_capital_cmd(ctx: &mut Context) -> CliResult<Outcome> {
    let r = ctx.resolve()?;
    let c = &ctx.loaded.controls;
    let state = r.state(1)?;
    let closed = human_capital(&state, &r.consts)?;
    let dt = c.dt.unwrap_or(r.params.income.grid.ds());
    let horizon = c
        .horizon
        .unwrap_or_else(|| human_capital_horizon(&r.consts, &state, closed, 1e-3, dt));
    let clock = Instant::now();
    let e = human_capital_mc_oracle(&r.params, &r.consts, &state, horizon, c.n_paths, dt, c.seed)?;
    let seconds = clock.elapsed().as_secs_f64();
    let passed = e.covers(closed, 3.0);
    let mut table = Table::new(&[
        "closed_form",
        "oracle_mean",
        "stderr",
        "truncation_bound",
        "z",
        "horizon",
        "dt",
        "n_paths",
        "passed",
    ]);
    table.push(vec![
        num(closed),
        num(e.mean),
        num(e.stderr),
        num(e.truncation_bound),
        num(e.z_score(closed)),
        num(horizon),
        num(dt),
        c.n_paths.to_string(),
        passed.to_string(),
    ]);
    let mut manifest = ctx.manifest();
    manifest.resolved_dt = Some(dt);
    manifest.resolved_horizon = Some(horizon);
    manifest.constants = Some(ConstantsSummary::from(&r.consts));
    Ok(Outcome::new(
        Report {
            command: ctx.command.into(),
            table,
            passed: Some(passed),
            notes: vec!["pass: |closed - oracle| <= 3 stderr + truncation bound".into()],
        },
        manifest,
        vec![("oracle".into(), seconds)],
    ))
}

const POLICY_VARS: [&str; 5] = ["wealth", "income", "gamma", "c", "bequest"];

struct PolicySample {
    /// `POLICY_VARS` at each recorded step, variable-major.
    recorded: Vec<f64>,
    gamma_crossed: bool,
    income_crossings: usize,
    min_ratio: f64,
}

pub fn policy_sim_cmd(ctx: &mut Context, sample_paths: usize) -> CliResult<Outcome> {
    let r = ctx.resolve()?;
    let c = &ctx.loaded.controls;
    let (dt, horizon) = (c.dt(), c.horizon());
    let config = LoopConfig::new(dt);
    let engine = ClosedLoop::new(&r.params, &r.consts, config)?;
    let steps = step_count(horizon, dt)?;
    let rec = recorded_steps(steps);
    let n = r.consts.n();
    let start = engine.start(r.w(), r.x0(), &r.past)?;
    let mut theta0 = vec![0.0; n];
    let first = engine.evaluate(&start, &mut theta0);
    if first.region == Region::Inadmissible {
        return Err(merton_delay::Error::InadmissibleState {
            gamma: first.gamma,
            tol: first.tol,
        }
        .into());
    }
    let clock = Instant::now();
    let samples = map_paths(c.n_paths, |j| {
        let mut rng = path_rng(c.seed, j);
        let mut dz = vec![0.0; n];
        let mut theta = theta0.clone();
        let mut state = start.clone();
        let mut point = first;
        let nrec = rec.len();
        let mut out = PolicySample {
            recorded: vec![f64::NAN; POLICY_VARS.len() * nrec],
            gamma_crossed: false,
            income_crossings: 0,
            min_ratio: 1.0,
        };
        let mut next = 0;
        for k in 0..=steps {
            if next < nrec && rec[next] == k {
                let vals = [
                    state.wealth,
                    state.income.y,
                    point.gamma,
                    point.c,
                    point.bequest,
                ];
                for (v, x) in vals.iter().enumerate() {
                    out.recorded[v * nrec + next] = *x;
                }
                next += 1;
            }
            if k == steps {
                break;
            }
            fill_increments(&mut rng, config.dt.sqrt(), &mut dz);
            out.income_crossings += engine
                .advance(&mut state, &point, &theta, &dz)
                .income_crossed as usize;
            point = engine.evaluate(&state, &mut theta);
            if first.gamma > 0.0 {
                out.min_ratio = out.min_ratio.min(point.gamma / first.gamma);
            }
            if point.region == Region::Inadmissible {
                out.gamma_crossed = true;
                break;
            }
        }
        out
    });
    let seconds = clock.elapsed().as_secs_f64();

    let nrec = rec.len();
    let mut fan = Table {
        columns: fan_columns(&["variable", "t"]),
        rows: Vec::new(),
    };
    for (v, name) in POLICY_VARS.iter().enumerate() {
        for (i, &k) in rec.iter().enumerate() {
            let mut col: Vec<f64> = samples.iter().map(|s| s.recorded[v * nrec + i]).collect();
            fan.push(
                [name.to_string(), num(k as f64 * dt)]
                    .into_iter()
                    .chain(fan_row(&mut col).into_iter().map(num))
                    .collect(),
            );
        }
    }
    let mut columns = vec!["path", "t", "wealth", "income", "gamma", "c", "bequest"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    columns.extend((1..=n).map(|i| format!("theta_{i}")));
    let mut paths = Table {
        columns,
        rows: Vec::new(),
    };
    let mut identity_gap: f64 = 0.0;
    for j in 0..sample_paths.min(c.n_paths) {
        let path = simulate_closed_loop(
            &r.params,
            &r.consts,
            r.w(),
            r.x0(),
            &r.past,
            horizon,
            config,
            SeedRecord::new(c.seed, j as u64),
        )?;
        identity_gap = identity_gap.max(path.gamma_identity_gap(&r.params, &r.consts)?);
        for k in 0..path.len() {
            let d = &path.decisions[k];
            let mut row = vec![
                j.to_string(),
                num(path.times[k]),
                num(path.wealth[k]),
                num(path.income[k]),
                num(path.gamma[k]),
                num(d.c),
                num(d.bequest),
            ];
            row.extend(d.theta.iter().map(|t| num(*t)));
            paths.push(row);
        }
    }
    ctx.out.csv("policy_fan.csv", &fan)?;
    ctx.out.csv("policy_paths.csv", &paths)?;

    let gamma_crossings = samples.iter().filter(|s| s.gamma_crossed).count();
    let income_crossings: usize = samples.iter().map(|s| s.income_crossings).sum();
    let min_ratio = samples
        .iter()
        .map(|s| s.min_ratio)
        .fold(f64::INFINITY, f64::min);
    let mut passed = identity_gap <= 1e-10;
    if first.region == Region::Interior {
        passed &= gamma_crossings == 0;
    }
    let mut table = Table::new(&[
        "n_paths",
        "dt",
        "horizon",
        "gamma0",
        "gamma_crossings",
        "income_crossings",
        "min_gamma_ratio",
        "identity_gap",
        "passed",
    ]);
    table.push(vec![
        c.n_paths.to_string(),
        num(dt),
        num(horizon),
        num(first.gamma),
        gamma_crossings.to_string(),
        income_crossings.to_string(),
        num(min_ratio),
        num(identity_gap),
        passed.to_string(),
    ]);
    let mut manifest = ctx.manifest();
    manifest.resolved_dt = Some(dt);
    manifest.resolved_horizon = Some(horizon);
    manifest.constants = Some(ConstantsSummary::from(&r.consts));
    Ok(Outcome::new(
        Report {
            command: ctx.command.into(),
            table,
            passed: Some(passed),
            notes: vec![format!(
                "identity gap over {} sample paths; pass also needs zero Γ crossings",
                sample_paths.min(c.n_paths)
            )],
        },
        manifest,
        vec![("simulation".into(), seconds)],
    ))
}

pub fn value_check_cmd(ctx: &mut Context, consumption_scale: f64) -> CliResult<Outcome> {
    if !(consumption_scale >= 0.0 && consumption_scale.is_finite()) {
        return Err(CliError::Config(format!(
            "consumption scale must be >= 0, got {consumption_scale}"
        )));
    }
    let r = ctx.resolve()?;
    let c = &ctx.loaded.controls;
    let (dt, horizon) = (c.dt(), c.horizon());
    let v = value_function(r.w(), &r.state(1)?, &r.consts)?.to_f64();
    let config = LoopConfig::new(dt).with_consumption_scale(consumption_scale);
    let clock = Instant::now();
    let run = run_objective(
        &r.params,
        &r.consts,
        r.w(),
        r.x0(),
        &r.past,
        horizon,
        config,
        c.n_paths,
        c.seed,
    )?;
    let seconds = clock.elapsed().as_secs_f64();
    let e = run.estimate;
    let optimal = consumption_scale == 1.0;
    let passed = run.gamma_crossings == 0
        && run.sentinel_paths == 0
        && if optimal {
            e.covers(v, 3.0)
        } else {
            e.mean < v - 3.0 * e.stderr
        };
    // closed form of this policy's objective, whole and cut at the horizon
    let policy_value =
        scaled_policy_value(&r.consts, run.gamma0, consumption_scale).unwrap_or(f64::NAN);
    let rate = utility_decay_rate(&r.consts, consumption_scale);
    let truncated = policy_value * (1.0 - (-rate * horizon).exp());
    let mut table = Table::new(&[
        "gamma",
        "consumption_scale",
        "value",
        "mean",
        "stderr",
        "truncation_bound",
        "z",
        "policy_value",
        "truncated_value",
        "z_truncated",
        "gamma_crossings",
        "income_crossings",
        "passed",
    ]);
    table.push(vec![
        num(r.params.prefs.gamma),
        num(consumption_scale),
        num(v),
        num(e.mean),
        num(e.stderr),
        num(e.truncation_bound),
        num(e.z_score(v)),
        num(policy_value),
        num(truncated),
        num(e.z_score(truncated)),
        run.gamma_crossings.to_string(),
        run.income_crossings.to_string(),
        passed.to_string(),
    ]);
    let rule = if optimal {
        "pass: |mean - V| <= 3 stderr + truncation bound"
    } else {
        "pass: mean < V - 3 stderr (perturbed consumption)"
    };
    let mut manifest = ctx.manifest();
    manifest.resolved_dt = Some(dt);
    manifest.resolved_horizon = Some(horizon);
    manifest.constants = Some(ConstantsSummary::from(&r.consts));
    Ok(Outcome::new(
        Report {
            command: ctx.command.into(),
            table,
            passed: Some(passed),
            notes: vec![rule.into()],
        },
        manifest,
        vec![("objective".into(), seconds)],
    ))
}

pub fn benchmark_cmd(ctx: &mut Context) -> CliResult<Outcome> {
    let r = ctx.resolve()?;
    let zero = DerivedConstants::new(&r.params.without_delay())?;
    let state = r.state(1)?;
    let w = benchmark_wedges(r.w(), &state, &r.consts, &zero)?;
    let rel = |a: f64, b: f64| {
        let s = a.abs().max(b.abs());
        if s == 0.0 {
            0.0
        } else {
            (a - b).abs() / s
        }
    };
    let mut table = Table::new(&["quantity", "closed_form", "direct", "relative_residual"]);
    table.push(vec![
        "gamma_wedge".into(),
        num(w.gamma),
        num(w.gamma_direct),
        num(rel(w.gamma, w.gamma_direct)),
    ]);
    for (i, (a, b)) in w.theta.iter().zip(&w.theta_direct).enumerate() {
        table.push(vec![
            format!("theta_wedge_{}", i + 1),
            num(*a),
            num(*b),
            num(rel(*a, *b)),
        ]);
    }
    let passed = w.residual() <= 1e-12;
    let with = r.w() + human_capital(&state, &r.consts)?;
    let without = r.w() + human_capital(&state, &zero)?;
    let mut manifest = ctx.manifest();
    manifest.constants = Some(ConstantsSummary::from(&r.consts));
    Ok(Outcome::new(
        Report {
            command: ctx.command.into(),
            table,
            passed: Some(passed),
            notes: vec![
                format!("total wealth with delay {with}, without {without}"),
                "pass: residual <= 1e-12".into(),
            ],
        },
        manifest,
        Vec::new(),
    ))
}

pub fn suite_cmd(ctx: &mut Context) -> CliResult<Outcome> {
    // fail fast on an invalid base scenario, at each risk aversion used
    for gamma in GAMMAS {
        Resolved::new(&ctx.loaded.scenario.clone().with_gamma(gamma))?;
    }
    let c = &ctx.loaded.controls;
    let mut cfg = SuiteConfig {
        seed: c.seed,
        n_paths: c.n_paths,
        ..SuiteConfig::default()
    };
    if let Some(dt) = c.dt {
        cfg.dt = dt;
    }
    if let Some(h) = c.horizon {
        cfg.horizon = h;
    }
    let checks = run_suite(&ctx.loaded.scenario, &cfg, |check| eprintln!("{check}"));

    let mut table = Table::new(&["criterion", "name", "verdict", "detail"]);
    let mut metrics = Table::new(&["criterion", "metric", "value"]);
    let mut timings = Vec::new();
    for check in &checks {
        table.push(vec![
            check.id.to_string(),
            check.name.clone(),
            if check.passed { "PASS" } else { "FAIL" }.into(),
            check.detail.clone(),
        ]);
        for m in &check.metrics {
            if m.label.ends_with(".seconds") {
                timings.push((format!("criterion{}.{}", check.id, m.label), m.value));
            } else {
                metrics.push(vec![check.id.to_string(), m.label.clone(), num(m.value)]);
            }
        }
    }
    ctx.out.csv("suite_metrics.csv", &metrics)?;
    let summary: String = checks.iter().map(|c| format!("{c}\n")).collect();
    ctx.out.text("suite_summary.txt", &summary)?;
    let mut manifest = ctx.manifest();
    manifest.resolved_dt = Some(cfg.dt);
    manifest.resolved_horizon = Some(cfg.horizon);
    manifest.suite = Some(cfg);
    Ok(Outcome::new(
        Report {
            command: ctx.command.into(),
            table,
            passed: Some(merton_delay::all_passed(&checks)),
            notes: Vec::new(),
        },
        manifest,
        timings,
    ))
}

pub fn emit(ctx: &mut Context, outcome: &Outcome) -> CliResult<String> {
    ctx.out
        .csv(&format!("{}.csv", ctx.command), &outcome.report.table)?;
    ctx.out
        .json(&format!("{}.json", ctx.command), &outcome.report)?;
    outcome.report.render(ctx.format)
}
