//! The acceptance checks, shared by the test target and the command line.

use std::fmt;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::constants::DerivedConstants;
use crate::error::{Error, Result};
use crate::estimate::MCEstimate;
use crate::kernel::Kernel;
use crate::objective::{run_objective, scaled_policy_value, value_function, ObjectiveRun};
use crate::params::{validate, ValidationConfig, Violation};
use crate::policy::{
    benchmark_wedges, feedback, gamma_star_exact, simulate_closed_loop_on, terminal_total_wealth,
    ClosedLoop, LoopConfig,
};
use crate::quadrature::DelayGrid;
use crate::rng::{BrownianPath, SeedRecord};
use crate::scenario::{Resolved, Scenario};
use crate::valuation::{
    human_capital, human_capital_horizon, human_capital_mc_oracle, BOUNDARY_TOL,
};

/// Risk aversions every check is run at: one below and one above 1.
pub const GAMMAS: [f64; 2] = [0.5, 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Step, horizon and path count of the headline objective runs.
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    /// Wall-clock budget per risk aversion for the headline runs, seconds.
    pub time_budget: f64,
    pub z: f64,
    pub hc_dt: f64,
    pub hc_paths: usize,
    /// Tail bound of the human-capital oracle relative to the closed form.
    pub hc_rel_tail: f64,
    /// Coarsest step of the convergence ladder; three halvings follow.
    pub convergence_dt: f64,
    pub convergence_horizon: f64,
    pub convergence_paths: usize,
    pub convergence_ratio: f64,
    pub mean_horizon: f64,
    pub mean_paths: usize,
    /// Delay-grid sizes for the memory ODE residual.
    pub ode_grid: [usize; 4],
    pub ode_ratio: f64,
    pub exact_tol: f64,
    pub homogeneity_states: usize,
    pub boundary_paths: usize,
    pub boundary_horizon: f64,
    pub perturbation: f64,
    /// Perturbed-policy runs for `γ < 1` and `γ > 1`.
    pub perturbation_low: RunControls,
    pub perturbation_high: RunControls,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunControls {
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            dt: 1.0 / 250.0,
            horizon: 60.0,
            n_paths: 20_000,
            time_budget: 60.0,
            z: 3.0,
            hc_dt: 0.04,
            hc_paths: 20_000,
            hc_rel_tail: 1e-3,
            convergence_dt: 0.02,
            convergence_horizon: 1.0,
            convergence_paths: 200,
            convergence_ratio: 1.3,
            mean_horizon: 1.0,
            mean_paths: 100_000,
            ode_grid: [50, 100, 200, 400],
            ode_ratio: 1.8,
            exact_tol: 1e-12,
            homogeneity_states: 100,
            boundary_paths: 100,
            boundary_horizon: 5.0,
            perturbation: 0.2,
            // For γ < 1 truncation already decides the comparison, and over
            // longer horizons a few paths get so close to Γ = 0 that the
            // discretization pushes them across.
            perturbation_low: RunControls {
                dt: 1.0 / 250.0,
                horizon: 60.0,
                n_paths: 10_000,
            },
            // For γ > 1 truncation raises J, so the horizon must be long enough
            // for the perturbed values to fall below V.
            perturbation_high: RunControls {
                dt: 0.02,
                horizon: 150.0,
                n_paths: 10_000,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub label: String,
    pub value: f64,
}

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub metrics: Vec<Metric>,
}

impl Check {
    fn new(id: u8, name: &str) -> Self {
        Self {
            id,
            name: name.to_string(),
            passed: true,
            detail: String::new(),
            metrics: Vec::new(),
        }
    }

    fn metric(&mut self, label: impl Into<String>, value: f64) {
        self.metrics.push(Metric {
            label: label.into(),
            value,
        });
    }

    /// Records a sub-check; the criterion passes only if all of them do.
    fn require(&mut self, ok: bool, note: impl AsRef<str>) {
        self.passed &= ok;
        if !self.detail.is_empty() {
            self.detail.push_str("; ");
        }
        if !ok {
            self.detail.push_str("FAILED ");
        }
        self.detail.push_str(note.as_ref());
    }

    fn failed_with(id: u8, name: &str, err: &Error) -> Self {
        Self {
            id,
            name: name.to_string(),
            passed: false,
            detail: format!("error: {err}"),
            metrics: Vec::new(),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "{verdict} [{:>2}] {}: {}",
            self.id, self.name, self.detail
        )
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    !checks.is_empty() && checks.iter().all(|c| c.passed)
}

const NAMES: [&str; 10] = [
    "value function",
    "human capital representation",
    "total wealth stochastic exponential",
    "memory ODE",
    "benchmark wedges",
    "homogeneity",
    "admissibility and boundary",
    "income positivity",
    "suboptimality",
    "hypothesis gate",
];

fn relative(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Runs every criterion on `base` (its risk aversion is replaced by each of
/// [`GAMMAS`]), calling `report` as each one finishes.
pub fn run_suite(base: &Scenario, cfg: &SuiteConfig, mut report: impl FnMut(&Check)) -> Vec<Check> {
    let mut checks = Vec::with_capacity(10);
    let mut push = |c: Check, checks: &mut Vec<Check>| {
        report(&c);
        checks.push(c);
    };

    let headline = headline_runs(base, cfg);
    push(value_check(&headline, cfg), &mut checks);
    let steps: [(u8, fn(&Scenario, &SuiteConfig) -> Result<Check>); 4] = [
        (2, human_capital_check),
        (3, stochastic_exponential_check),
        (4, memory_ode_check),
        (5, wedge_check),
    ];
    for (id, f) in steps {
        push(
            f(base, cfg).unwrap_or_else(|e| Check::failed_with(id, NAMES[id as usize - 1], &e)),
            &mut checks,
        );
    }
    push(
        homogeneity_check(base, cfg).unwrap_or_else(|e| Check::failed_with(6, NAMES[5], &e)),
        &mut checks,
    );
    push(
        admissibility_check(base, cfg, &headline)
            .unwrap_or_else(|e| Check::failed_with(7, NAMES[6], &e)),
        &mut checks,
    );
    push(positivity_check(base, &headline), &mut checks);
    push(
        suboptimality_check(base, cfg).unwrap_or_else(|e| Check::failed_with(9, NAMES[8], &e)),
        &mut checks,
    );
    push(hypothesis_gate_check(base), &mut checks);
    checks
}

/// Objective runs under the optimal policy at each of [`GAMMAS`].
pub struct HeadlineRun {
    pub gamma: f64,
    pub value: f64,
    pub seconds: f64,
    pub run: Result<ObjectiveRun>,
}

fn headline_runs(base: &Scenario, cfg: &SuiteConfig) -> Vec<HeadlineRun> {
    GAMMAS
        .iter()
        .map(|&gamma| {
            let clock = Instant::now();
            let outcome = (|| {
                let r = Resolved::new(&base.clone().with_gamma(gamma))?;
                let value = value_function(r.w(), &r.state(1)?, &r.consts)?.to_f64();
                let run = run_objective(
                    &r.params,
                    &r.consts,
                    r.w(),
                    r.x0(),
                    &r.past,
                    cfg.horizon,
                    LoopConfig::new(cfg.dt),
                    cfg.n_paths,
                    cfg.seed,
                )?;
                Ok((value, run))
            })();
            let seconds = clock.elapsed().as_secs_f64();
            match outcome {
                Ok((value, run)) => HeadlineRun {
                    gamma,
                    value,
                    seconds,
                    run: Ok(run),
                },
                Err(e) => HeadlineRun {
                    gamma,
                    value: f64::NAN,
                    seconds,
                    run: Err(e),
                },
            }
        })
        .collect()
}

fn value_check(runs: &[HeadlineRun], cfg: &SuiteConfig) -> Check {
    let mut c = Check::new(1, NAMES[0]);
    for h in runs {
        let run = match &h.run {
            Ok(run) => run,
            Err(e) => {
                c.require(false, format!("γ={}: {e}", h.gamma));
                continue;
            }
        };
        let e = &run.estimate;
        let gap = (e.mean - h.value).abs();
        let allowed = cfg.z * e.stderr + e.truncation_bound;
        c.require(
            gap <= allowed && run.gamma_crossings == 0,
            format!(
                "γ={}: V={:.6} J={:.6} se={:.2e} bound={:.4} |J-V|={:.4} ≤ {:.4}",
                h.gamma, h.value, e.mean, e.stderr, e.truncation_bound, gap, allowed
            ),
        );
        c.require(
            h.seconds <= cfg.time_budget,
            format!("runtime within {}s", cfg.time_budget),
        );
        let tag = format!("gamma{}", h.gamma);
        c.metric(format!("{tag}.value"), h.value);
        c.metric(format!("{tag}.mean"), e.mean);
        c.metric(format!("{tag}.stderr"), e.stderr);
        c.metric(format!("{tag}.truncation_bound"), e.truncation_bound);
        // the truncated closed form V - sign(V)·bound is what the estimator targets
        c.metric(
            format!("{tag}.z_truncated"),
            e.z_score(h.value - h.value.signum() * e.truncation_bound),
        );
        c.metric(format!("{tag}.seconds"), h.seconds);
    }
    c
}

fn human_capital_check(base: &Scenario, cfg: &SuiteConfig) -> Result<Check> {
    let mut c = Check::new(2, NAMES[1]);
    let r = Resolved::new(base)?;
    let state = r.state(1)?;
    let closed = human_capital(&state, &r.consts)?;
    let horizon = human_capital_horizon(&r.consts, &state, closed, cfg.hc_rel_tail, cfg.hc_dt);
    let e: MCEstimate = human_capital_mc_oracle(
        &r.params,
        &r.consts,
        &state,
        horizon,
        cfg.hc_paths,
        cfg.hc_dt,
        cfg.seed,
    )?;
    c.require(
        e.covers(closed, cfg.z),
        format!(
            "closed={closed:.6} oracle={:.6} se={:.2e} bound={:.2e} T={horizon:.2}",
            e.mean, e.stderr, e.truncation_bound
        ),
    );
    c.metric("closed_form", closed);
    c.metric("oracle_mean", e.mean);
    c.metric("oracle_stderr", e.stderr);
    c.metric("truncation_bound", e.truncation_bound);
    c.metric("horizon", horizon);

    let zero = Resolved::new(&base.clone().with_kernel(Kernel::Zero))?;
    let zstate = zero.state(1)?;
    let hc0 = human_capital(&zstate, &zero.consts)?;
    let target = zero.x0() / zero.consts.beta;
    let gap = relative(hc0, target);
    c.require(
        gap <= 2.0 * f64::EPSILON,
        format!("φ≡0: {hc0} vs x₀/β={target}"),
    );
    Ok(c)
}

/// Mean over paths of `max_t |Γ_EM - Γ_exact|` at each rung of the dt ladder.
pub fn convergence_ladder(r: &Resolved, cfg: &SuiteConfig, rungs: usize) -> Result<Vec<f64>> {
    let finest = cfg.convergence_dt / (1 << (rungs - 1)) as f64;
    let steps = (cfg.convergence_horizon / finest).round() as usize;
    let engines = (0..rungs)
        .map(|i| {
            ClosedLoop::new(
                &r.params,
                &r.consts,
                LoopConfig::new(cfg.convergence_dt / (1 << i) as f64),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut errors = vec![0.0; rungs];
    for j in 0..cfg.convergence_paths {
        let fine = BrownianPath::generate(
            r.consts.n(),
            steps,
            finest,
            SeedRecord::new(cfg.seed, j as u64),
        )?;
        for (i, engine) in engines.iter().enumerate() {
            let b = fine.coarsen(1 << (rungs - 1 - i))?;
            let path = simulate_closed_loop_on(engine, r.w(), r.x0(), &r.past, &b)?;
            let exact = gamma_star_exact(&r.consts, path.gamma[0], &b)?;
            let worst = path
                .gamma
                .iter()
                .zip(&exact)
                .map(|(a, e)| (a - e).abs())
                .fold(0.0, f64::max);
            errors[i] += worst / cfg.convergence_paths as f64;
        }
    }
    Ok(errors)
}

fn stochastic_exponential_check(base: &Scenario, cfg: &SuiteConfig) -> Result<Check> {
    let mut c = Check::new(3, NAMES[2]);
    for gamma in GAMMAS {
        let r = Resolved::new(&base.clone().with_gamma(gamma))?;
        let errors = convergence_ladder(&r, cfg, 4)?;
        let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
        let ok = ratios.iter().all(|q| *q >= cfg.convergence_ratio);
        c.require(
            ok,
            format!(
                "γ={gamma}: ratios {}",
                ratios
                    .iter()
                    .map(|q| format!("{q:.3}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        );
        for (i, q) in ratios.iter().enumerate() {
            c.metric(format!("gamma{gamma}.ratio{}", i + 1), *q);
        }

        let engine = ClosedLoop::new(&r.params, &r.consts, LoopConfig::new(cfg.dt))?;
        let terminal = terminal_total_wealth(
            &engine,
            r.w(),
            r.x0(),
            &r.past,
            cfg.mean_horizon,
            cfg.mean_paths,
            cfg.seed ^ 0x5eed,
        )?;
        let e = MCEstimate::from_samples(&terminal, 0.0, cfg.mean_horizon);
        let gamma0 = r.w() + human_capital(&r.state(1)?, &r.consts)?;
        let target = gamma0 * (r.consts.gamma_star_drift * cfg.mean_horizon).exp();
        c.require(
            e.covers(target, cfg.z),
            format!(
                "γ={gamma}: E Γ(T)={:.5} target={target:.5} z={:.2}",
                e.mean,
                e.z_score(target)
            ),
        );
        c.metric(format!("gamma{gamma}.terminal_mean"), e.mean);
        c.metric(format!("gamma{gamma}.terminal_target"), target);
    }
    Ok(c)
}

fn memory_ode_check(base: &Scenario, cfg: &SuiteConfig) -> Result<Check> {
    let mut c = Check::new(4, NAMES[3]);
    let mut residuals = Vec::new();
    for m in cfg.ode_grid {
        let mut s = base.clone();
        s.income.m = m;
        s.initial.past = crate::scenario::Past::Level(1.0);
        residuals.push(DerivedConstants::new(&s.params()?)?.memory_ode_residual());
    }
    let ratios: Vec<f64> = residuals.windows(2).map(|w| w[0] / w[1]).collect();
    c.require(
        ratios.iter().all(|q| *q >= cfg.ode_ratio),
        format!(
            "residual ratios {}",
            ratios
                .iter()
                .map(|q| format!("{q:.3}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    );
    for (m, res) in cfg.ode_grid.iter().zip(&residuals) {
        c.metric(format!("residual.m{m}"), *res);
    }

    let named = [
        base.income.kernel.clone(),
        Kernel::Constant { value: 0.01 },
        Kernel::Exponential {
            scale: 0.02,
            rate: 1.5,
        },
        Kernel::Zero,
    ];
    let mut worst: f64 = 0.0;
    let mut left_exact = true;
    for kernel in named {
        if matches!(kernel, Kernel::Sampled { .. }) {
            continue;
        }
        let consts = DerivedConstants::new(&base.clone().with_kernel(kernel).params()?)?;
        left_exact &= consts.h_inf[0] == 0.0;
        worst = worst.max(consts.memory_endpoint_gap());
    }
    c.require(left_exact, "h∞(-d) = 0");
    c.require(
        worst <= 1e-10,
        format!("max |h∞(0) - (βg∞-1)| = {worst:.1e}"),
    );
    Ok(c)
}

fn wedge_check(base: &Scenario, cfg: &SuiteConfig) -> Result<Check> {
    let mut c = Check::new(5, NAMES[4]);
    for gamma in GAMMAS {
        let r = Resolved::new(&base.clone().with_gamma(gamma))?;
        let zero = DerivedConstants::new(&r.params.without_delay())?;
        let w = benchmark_wedges(r.w(), &r.state(1)?, &r.consts, &zero)?;
        c.require(
            w.residual() <= cfg.exact_tol,
            format!("γ={gamma}: residual {:.1e}", w.residual()),
        );
        c.metric(format!("gamma{gamma}.gamma_wedge"), w.gamma);
        c.metric(format!("gamma{gamma}.theta_wedge"), w.theta[0]);
        c.metric(format!("gamma{gamma}.residual"), w.residual());

        let flat = Resolved::new(&base.clone().with_gamma(gamma).with_kernel(Kernel::Zero))?;
        let w = benchmark_wedges(flat.w(), &flat.state(1)?, &flat.consts, &flat.consts)?;
        let vanish = w.gamma == 0.0
            && w.gamma_direct == 0.0
            && w.theta.iter().chain(&w.theta_direct).all(|t| *t == 0.0);
        c.require(vanish, format!("γ={gamma}: φ≡0 wedges vanish"));
    }
    Ok(c)
}

fn homogeneity_check(base: &Scenario, cfg: &SuiteConfig) -> Result<Check> {
    let mut c = Check::new(6, NAMES[5]);
    let tol = cfg.exact_tol;
    for gamma in GAMMAS {
        let r = Resolved::new(&base.clone().with_gamma(gamma))?;
        let grid: DelayGrid = r.params.income.grid;
        let mut rng = SeedRecord::new(cfg.seed, 6).rng();
        let mut worst: f64 = 0.0;
        for _ in 0..cfg.homogeneity_states {
            let x0 = rng.random_range(0.1..5.0);
            let past: Vec<f64> = (0..grid.m).map(|_| rng.random_range(0.0..5.0)).collect();
            let state = crate::income::IncomeState::new(x0, &past, grid, 1)?;
            let hc = human_capital(&state, &r.consts)?;
            let w = rng.random_range(-0.95 * hc..3.0 * hc.max(1.0));
            let v = value_function(w, &state, &r.consts)?.to_f64();
            let v2 = value_function(2.0 * w, &state.scaled(2.0), &r.consts)?.to_f64();
            worst = worst.max(relative(v2, 2f64.powf(1.0 - gamma) * v));
            let f = feedback(w, &state, &r.consts)?;
            let f2 = feedback(2.0 * w, &state.scaled(2.0), &r.consts)?;
            worst = worst
                .max(relative(f2.c, 2.0 * f.c))
                .max(relative(f2.bequest, 2.0 * f.bequest));
            for (a, b) in f2.theta.iter().zip(&f.theta) {
                worst = worst.max(relative(*a, 2.0 * b));
            }
        }
        c.require(
            worst <= tol,
            format!(
                "γ={gamma}: worst relative gap {worst:.1e} over {} states",
                cfg.homogeneity_states
            ),
        );
        c.metric(format!("gamma{gamma}.worst"), worst);
    }
    Ok(c)
}

fn admissibility_check(base: &Scenario, cfg: &SuiteConfig, runs: &[HeadlineRun]) -> Result<Check> {
    let mut c = Check::new(7, NAMES[6]);
    for h in runs {
        match &h.run {
            Ok(run) => {
                c.require(
                    run.gamma_crossings == 0,
                    format!(
                        "γ={}: {} Γ crossings in {} paths, min Γ/Γ₀={:.2e}",
                        h.gamma, run.gamma_crossings, run.estimate.n_paths, run.min_gamma_ratio
                    ),
                );
                c.metric(
                    format!("gamma{}.gamma_crossings", h.gamma),
                    run.gamma_crossings as f64,
                );
                c.metric(
                    format!("gamma{}.min_gamma_ratio", h.gamma),
                    run.min_gamma_ratio,
                );
            }
            Err(e) => c.require(false, format!("γ={}: {e}", h.gamma)),
        }
    }

    let r = Resolved::new(base)?;
    let engine = ClosedLoop::new(&r.params, &r.consts, LoopConfig::new(cfg.dt))?;
    // human capital as the engine measures it, so Γ(0) is exactly 0
    let hc = engine.human_capital(&engine.start(0.0, r.x0(), &r.past)?);
    let hedge = r.consts.solve_sigma_t(&r.consts.sigma_y)?;
    let band = BOUNDARY_TOL * hc.max(1.0) * 10.0;
    let (mut on_boundary, mut zero_controls, mut hedging, mut worst_gap) =
        (true, true, true, 0.0_f64);
    for j in 0..cfg.boundary_paths {
        let steps = crate::income::step_count(cfg.boundary_horizon, cfg.dt)?;
        let b = BrownianPath::generate(
            r.consts.n(),
            steps,
            cfg.dt,
            SeedRecord::new(cfg.seed, 7_000 + j as u64),
        )?;
        let path = simulate_closed_loop_on(&engine, -hc, r.x0(), &r.past, &b)?;
        on_boundary &= path.gamma.iter().all(|g| g.abs() <= band) && path.gamma_crossings == 0;
        for (d, y) in path.decisions.iter().zip(&path.income) {
            zero_controls &= d.c == 0.0 && d.bequest == 0.0;
            for (t, h) in d.theta.iter().zip(hedge.iter()) {
                hedging &= relative(*t, -r.consts.g_inf * y * h) <= 1e-12;
            }
        }
        worst_gap = worst_gap.max(path.boundary_gap / hc);
    }
    c.require(
        on_boundary,
        format!(
            "Γ(0)=0: Γ stays within {band:.1e} on {} paths",
            cfg.boundary_paths
        ),
    );
    c.require(zero_controls, "c = B = 0");
    c.require(hedging, "θ is the pure hedge");
    c.metric("boundary_gap_relative", worst_gap);
    Ok(c)
}

fn positivity_check(base: &Scenario, runs: &[HeadlineRun]) -> Check {
    let mut c = Check::new(8, NAMES[7]);
    let nonneg = base.income.kernel.is_nonnegative() && base.initial.x0 > 0.0;
    c.require(nonneg, "x₀ > 0, φ ≥ 0");
    for h in runs {
        match &h.run {
            Ok(run) => {
                c.require(
                    run.income_crossings == 0,
                    format!(
                        "γ={}: {} income crossings in {} paths",
                        h.gamma, run.income_crossings, run.estimate.n_paths
                    ),
                );
                c.metric(
                    format!("gamma{}.income_crossings", h.gamma),
                    run.income_crossings as f64,
                );
            }
            Err(e) => c.require(false, format!("γ={}: {e}", h.gamma)),
        }
    }
    c
}

fn suboptimality_check(base: &Scenario, cfg: &SuiteConfig) -> Result<Check> {
    let mut c = Check::new(9, NAMES[8]);
    for gamma in GAMMAS {
        let r = Resolved::new(&base.clone().with_gamma(gamma))?;
        let state = r.state(1)?;
        let v = value_function(r.w(), &state, &r.consts)?.to_f64();
        let gamma0 = r.w() + human_capital(&state, &r.consts)?;
        let controls = if gamma < 1.0 {
            cfg.perturbation_low
        } else {
            cfg.perturbation_high
        };
        for scale in [1.0 - cfg.perturbation, 1.0 + cfg.perturbation] {
            let config = LoopConfig::new(controls.dt).with_consumption_scale(scale);
            let run = run_objective(
                &r.params,
                &r.consts,
                r.w(),
                r.x0(),
                &r.past,
                controls.horizon,
                config,
                controls.n_paths,
                cfg.seed,
            )?;
            let e = run.estimate;
            let limit = v - cfg.z * e.stderr;
            let exact = scaled_policy_value(&r.consts, gamma0, scale).unwrap_or(f64::NAN);
            c.require(
                e.mean < limit && run.gamma_crossings == 0,
                format!(
                    "γ={gamma} c×{scale} T={}: J={:.5} < V-3se={limit:.5}, crossings {} (untruncated {exact:.5})",
                    controls.horizon, e.mean, run.gamma_crossings
                ),
            );
            c.metric(format!("gamma{gamma}.scale{scale}.mean"), e.mean);
            c.metric(format!("gamma{gamma}.scale{scale}.stderr"), e.stderr);
            c.metric(format!("gamma{gamma}.scale{scale}.closed_form"), exact);
        }
        c.metric(format!("gamma{gamma}.value"), v);
    }
    Ok(c)
}

/// The constructed violating scenarios must be rejected with the named
/// conditions, and so must `base` with its delay kernel raised to 0.05.
fn hypothesis_gate_check(base: &Scenario) -> Check {
    let mut c = Check::new(10, NAMES[9]);
    let cfg = ValidationConfig::default();
    let hyp_one = |v: &Violation| matches!(v, Violation::HypothesisIViolated { .. });
    let hyp_two = |v: &Violation| matches!(v, Violation::HypothesisIIViolated { .. });
    let cases: [(Scenario, &dyn Fn(&Violation) -> bool); 3] = [
        (Scenario::delay_dominated(), &hyp_one),
        (Scenario::impatient(), &hyp_two),
        (
            base.clone()
                .with_kernel(Kernel::Constant { value: 0.05 })
                .with_name("base-phi0.05"),
            &hyp_one,
        ),
    ];
    for (s, expected) in cases {
        let named = match s.params().map(|p| validate(&p, &cfg)) {
            Ok(Err(report)) => report
                .violations
                .iter()
                .find(|v| expected(v))
                .map(|v| v.condition()),
            _ => None,
        };
        match named {
            Some(condition) => c.require(true, format!("{} rejected: {condition}", s.name)),
            None => c.require(false, format!("{} not rejected as expected", s.name)),
        }
    }
    c.require(
        !all_passed(&[Check {
            passed: false,
            ..Check::new(0, "probe")
        }]),
        "a failing row fails the suite",
    );
    let constructed_types = [Scenario::delay_dominated(), Scenario::impatient()].map(|s| {
        validate(&s.params().expect("reference scenario"), &cfg)
            .err()
            .map(|r| {
                r.violations
                    .iter()
                    .map(Violation::to_string)
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .unwrap_or_default()
    });
    c.detail
        .push_str(&format!(" [{}]", constructed_types.join(" | ")));
    c
}
