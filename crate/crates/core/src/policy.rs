//! Optimal feedback map, closed-loop simulation and the zero-delay benchmark.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::constants::DerivedConstants;
use crate::error::{Error, Result};
use crate::estimate::map_paths;
use crate::income::{step_count, IncomeModel, IncomeState};
use crate::params::ModelParams;
use crate::quadrature::inner_product;
use crate::rng::{fill_increments, path_rng, BrownianPath, SeedRecord};
use crate::valuation::{
    gamma_total_with, human_capital, HumanCapitalWeights, MemoryQuadrature, MemorySums, Region,
    BOUNDARY_TOL,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDecision {
    /// Consumption rate.
    pub c: f64,
    /// Bequest target.
    pub bequest: f64,
    /// Amount held in each risky asset.
    pub theta: Vec<f64>,
}

/// Policy at total wealth `gamma` and income `y`, without admissibility checks.
/// `consumption_scale` multiplies the optimal consumption rate.
#[inline]
pub fn decide_into(
    gamma: f64,
    region: Region,
    y: f64,
    consts: &DerivedConstants,
    consumption_scale: f64,
    theta: &mut [f64],
) -> (f64, f64) {
    let hedge = consts.g_inf * y;
    if region == Region::Boundary {
        for (t, h) in theta.iter_mut().zip(consts.hedge_direction.iter()) {
            *t = -hedge * h;
        }
        return (0.0, 0.0);
    }
    let merton = gamma / consts.gamma;
    for ((t, m), h) in theta
        .iter_mut()
        .zip(consts.merton_direction.iter())
        .zip(consts.hedge_direction.iter())
    {
        *t = merton * m - hedge * h;
    }
    let base = gamma / consts.f_inf;
    (consumption_scale * base, consts.bequest_factor * base)
}

/// The optimal feedback map at `(w, state)`.
pub fn feedback(w: f64, state: &IncomeState, consts: &DerivedConstants) -> Result<PolicyDecision> {
    let total = gamma_total_with(w, human_capital(state, consts)?, BOUNDARY_TOL);
    feedback_at(total.value, total.region, total.tol, state.y, consts)
}

/// Feedback map given total wealth directly.
pub fn feedback_at(
    gamma: f64,
    region: Region,
    tol: f64,
    y: f64,
    consts: &DerivedConstants,
) -> Result<PolicyDecision> {
    if region == Region::Inadmissible {
        return Err(Error::InadmissibleState { gamma, tol });
    }
    let mut theta = vec![0.0; consts.n()];
    let (c, bequest) = decide_into(gamma, region, y, consts, 1.0, &mut theta);
    Ok(PolicyDecision { c, bequest, theta })
}

/// Closed-loop simulation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub dt: f64,
    pub quadrature: MemoryQuadrature,
    /// Consumption is this multiple of the optimal rate; 1 is optimal.
    pub consumption_scale: f64,
    pub tol_rel: f64,
}

impl LoopConfig {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            quadrature: MemoryQuadrature::default(),
            consumption_scale: 1.0,
            tol_rel: BOUNDARY_TOL,
        }
    }

    pub fn with_consumption_scale(mut self, scale: f64) -> Self {
        self.consumption_scale = scale;
        self
    }

    pub fn with_quadrature(mut self, quadrature: MemoryQuadrature) -> Self {
        self.quadrature = quadrature;
        self
    }
}

/// Everything needed to advance `(W, income)` one step under the feedback map.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub consts: DerivedConstants,
    pub income: IncomeModel,
    pub grid: crate::quadrature::DelayGrid,
    pub config: LoopConfig,
    hc: HumanCapitalWeights,
    /// `μ - r·1`.
    excess: Vec<f64>,
    /// `σ` row-major.
    sigma: Vec<f64>,
    pub delta: f64,
}

/// Snapshot of one instant on a closed-loop path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopPoint {
    pub gamma: f64,
    pub region: Region,
    pub tol: f64,
    pub c: f64,
    pub bequest: f64,
}

impl ClosedLoop {
    pub fn new(
        params: &ModelParams,
        consts: &DerivedConstants,
        config: LoopConfig,
    ) -> Result<Self> {
        let income = IncomeModel::new(&params.income, config.dt)?;
        let hc = HumanCapitalWeights::new(consts, income.p, config.quadrature);
        let n = consts.n();
        let sigma = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| params.market.sigma[(i, j)])
            .collect();
        Ok(Self {
            consts: consts.clone(),
            income,
            grid: params.income.grid,
            config,
            hc,
            excess: params.market.excess_return().iter().copied().collect(),
            sigma,
            delta: params.prefs.delta,
        })
    }

    pub fn initial_state(&self, x0: f64, past: &[f64]) -> Result<IncomeState> {
        self.income.initial_state(self.grid, x0, past)
    }

    /// Path state at `t = 0`.
    pub fn start(&self, w: f64, x0: f64, past: &[f64]) -> Result<LoopState> {
        let income = self.initial_state(x0, past)?;
        let memory = self.hc.sums(&income);
        Ok(LoopState {
            wealth: w,
            income,
            memory,
        })
    }

    #[inline]
    pub fn human_capital(&self, state: &LoopState) -> f64 {
        self.hc.value_with(&state.income, &state.memory)
    }

    /// Evaluates the policy at the current state, writing `θ` into `theta`.
    #[inline]
    pub fn evaluate(&self, state: &LoopState, theta: &mut [f64]) -> LoopPoint {
        let total = gamma_total_with(state.wealth, self.human_capital(state), self.config.tol_rel);
        let (c, bequest) = decide_into(
            total.value,
            total.region,
            state.income.y,
            &self.consts,
            self.config.consumption_scale,
            theta,
        );
        LoopPoint {
            gamma: total.value,
            region: total.region,
            tol: total.tol,
            c,
            bequest,
        }
    }

    /// Euler–Maruyama step of the wealth equation with the raw drift
    /// `(r+δ)W + θᵀ(μ-r1) + y - c - δB`, then the income step on the same `dz`.
    ///
    /// A state on the boundary is absorbing: wealth is reset to minus the new
    /// human capital and the discarded Euler–Maruyama gap is reported.
    #[inline]
    pub fn advance(
        &self,
        state: &mut LoopState,
        point: &LoopPoint,
        theta: &[f64],
        dz: &[f64],
    ) -> StepReport {
        let n = theta.len();
        let w = state.wealth;
        let mut drift =
            self.consts.discount_rate * w + state.income.y - point.c - self.delta * point.bequest;
        let mut noise = 0.0;
        for i in 0..n {
            drift += theta[i] * self.excess[i];
            let mut col = 0.0;
            for j in 0..n {
                col += theta[j] * self.sigma[j * n + i];
            }
            noise += col * dz[i];
        }
        state.wealth = w + drift * self.config.dt + noise;
        let leaving = state.income.fine_history()[0];
        let income_crossed = self.income.advance(&mut state.income, dz);
        self.hc
            .advance_sums(&mut state.memory, leaving, &state.income);
        let mut boundary_gap = 0.0;
        if point.region == Region::Boundary {
            let pinned = -self.human_capital(state);
            boundary_gap = state.wealth - pinned;
            state.wealth = pinned;
        }
        StepReport {
            income_crossed,
            boundary_gap,
        }
    }
}

/// Side information from one closed-loop step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Income went from positive to non-positive.
    pub income_crossed: bool,
    /// `W_EM - (-human capital)` when the step started on the boundary.
    pub boundary_gap: f64,
}

/// Wealth, income and the running memory sums of one closed-loop path.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopState {
    pub wealth: f64,
    pub income: IncomeState,
    memory: MemorySums,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointPath {
    pub dt: f64,
    pub times: Vec<f64>,
    pub wealth: Vec<f64>,
    pub income: Vec<f64>,
    pub gamma: Vec<f64>,
    pub decisions: Vec<PolicyDecision>,
    pub brownian: BrownianPath,
    pub quadrature: MemoryQuadrature,
    /// Steps where `Γ` went from non-negative to below the boundary band.
    pub gamma_crossings: usize,
    pub income_crossings: usize,
    /// Largest Euler–Maruyama gap discarded while pinned to the boundary.
    pub boundary_gap: f64,
    /// Income at the delay-grid nodes before time 0.
    pub past: Vec<f64>,
}

impl JointPath {
    /// Largest relative gap between stored `Γ` and `W + human capital`
    /// recomputed by replaying the income equation on the stored increments.
    pub fn gamma_identity_gap(
        &self,
        params: &ModelParams,
        consts: &DerivedConstants,
    ) -> Result<f64> {
        let model = IncomeModel::new(&params.income, self.dt)?;
        let hc = HumanCapitalWeights::new(consts, model.p, self.quadrature).direct();
        let grid = params.income.grid;
        let mut state = model.initial_state(grid, self.income[0], &self.past)?;
        let mut worst: f64 = 0.0;
        for k in 0..self.gamma.len() {
            if k > 0 {
                model.advance(&mut state, self.brownian.increment(k - 1));
            }
            let g = self.wealth[k] + hc.value(&state);
            let scale = 1f64.max(self.gamma[k].abs()).max(self.wealth[k].abs());
            worst = worst.max((g - self.gamma[k]).abs() / scale);
        }
        Ok(worst)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Runs the closed loop from `(w, x0, past)` on the given increments.
pub fn simulate_closed_loop_on(
    engine: &ClosedLoop,
    w: f64,
    x0: f64,
    past: &[f64],
    brownian: &BrownianPath,
) -> Result<JointPath> {
    let n = engine.consts.n();
    if brownian.n != n {
        return Err(Error::DimensionMismatch {
            what: "brownian",
            expected: n,
            actual: brownian.n,
        });
    }
    if (brownian.dt - engine.config.dt).abs() > 1e-12 * engine.config.dt {
        return Err(Error::StepIncompatible {
            dt: brownian.dt,
            ds: engine.grid.ds(),
        });
    }
    let mut state = engine.start(w, x0, past)?;
    let mut theta = vec![0.0; n];
    let mut point = engine.evaluate(&state, &mut theta);
    if point.region == Region::Inadmissible {
        return Err(Error::InadmissibleState {
            gamma: point.gamma,
            tol: point.tol,
        });
    }
    let steps = brownian.steps();
    let mut out = JointPath {
        dt: brownian.dt,
        times: Vec::with_capacity(steps + 1),
        wealth: Vec::with_capacity(steps + 1),
        income: Vec::with_capacity(steps + 1),
        gamma: Vec::with_capacity(steps + 1),
        decisions: Vec::with_capacity(steps + 1),
        brownian: brownian.clone(),
        quadrature: engine.config.quadrature,
        gamma_crossings: 0,
        income_crossings: 0,
        boundary_gap: 0.0,
        past: past.to_vec(),
    };
    for k in 0..=steps {
        out.times.push(k as f64 * brownian.dt);
        out.wealth.push(state.wealth);
        out.income.push(state.income.y);
        out.gamma.push(point.gamma);
        out.decisions.push(PolicyDecision {
            c: point.c,
            bequest: point.bequest,
            theta: theta.clone(),
        });
        if k == steps {
            break;
        }
        let report = engine.advance(&mut state, &point, &theta, brownian.increment(k));
        if report.income_crossed {
            out.income_crossings += 1;
        }
        out.boundary_gap = out.boundary_gap.max(report.boundary_gap.abs());
        let was_admissible = point.region != Region::Inadmissible;
        point = engine.evaluate(&state, &mut theta);
        if was_admissible && point.region == Region::Inadmissible {
            out.gamma_crossings += 1;
        }
    }
    Ok(out)
}

/// Draws increments from `seed` and runs the closed loop to `horizon`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_closed_loop(
    params: &ModelParams,
    consts: &DerivedConstants,
    w: f64,
    x0: f64,
    past: &[f64],
    horizon: f64,
    config: LoopConfig,
    seed: SeedRecord,
) -> Result<JointPath> {
    let engine = ClosedLoop::new(params, consts, config)?;
    let steps = step_count(horizon, config.dt)?;
    let brownian = BrownianPath::generate(consts.n(), steps, config.dt, seed)?;
    simulate_closed_loop_on(&engine, w, x0, past, &brownian)
}

/// `Γ(horizon)` on each of `n_paths` closed-loop paths, in path order.
#[allow(clippy::too_many_arguments)]
pub fn terminal_total_wealth(
    engine: &ClosedLoop,
    w: f64,
    x0: f64,
    past: &[f64],
    horizon: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let steps = step_count(horizon, engine.config.dt)?;
    let start = engine.start(w, x0, past)?;
    let n = engine.consts.n();
    let sqrt_dt = engine.config.dt.sqrt();
    Ok(map_paths(n_paths, |j| {
        let mut rng = path_rng(seed, j);
        let mut dz = vec![0.0; n];
        let mut theta = vec![0.0; n];
        let mut state = start.clone();
        let mut point = engine.evaluate(&state, &mut theta);
        for _ in 0..steps {
            fill_increments(&mut rng, sqrt_dt, &mut dz);
            engine.advance(&mut state, &point, &theta, &dz);
            point = engine.evaluate(&state, &mut theta);
        }
        point.gamma
    }))
}

/// Exact stochastic exponential for optimal total wealth on given increments.
pub fn gamma_star_exact(
    consts: &DerivedConstants,
    gamma0: f64,
    brownian: &BrownianPath,
) -> Result<Vec<f64>> {
    if gamma0 < 0.0 {
        return Err(Error::InadmissibleState {
            gamma: gamma0,
            tol: 0.0,
        });
    }
    if brownian.n != consts.n() {
        return Err(Error::DimensionMismatch {
            what: "brownian",
            expected: consts.n(),
            actual: brownian.n,
        });
    }
    let vol = &consts.gamma_star_vol;
    let log_drift = (consts.gamma_star_drift - 0.5 * vol.dot(vol)) * brownian.dt;
    let mut out = Vec::with_capacity(brownian.steps() + 1);
    out.push(gamma0);
    let mut log_g = 0.0_f64;
    for k in 0..brownian.steps() {
        log_g += log_drift
            + vol
                .iter()
                .zip(brownian.increment(k))
                .map(|(v, z)| v * z)
                .sum::<f64>();
        out.push(gamma0 * log_g.exp());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wedges {
    /// Closed-form portfolio difference with and without delay.
    pub theta: Vec<f64>,
    /// Closed-form total-wealth difference.
    pub gamma: f64,
    /// The same differences from two direct evaluations.
    pub theta_direct: Vec<f64>,
    pub gamma_direct: f64,
}

impl Wedges {
    /// Largest relative disagreement between closed form and direct difference.
    pub fn residual(&self) -> f64 {
        let rel = |a: f64, b: f64| {
            let scale = a.abs().max(b.abs());
            if scale == 0.0 {
                0.0
            } else {
                (a - b).abs() / scale
            }
        };
        self.theta
            .iter()
            .zip(&self.theta_direct)
            .map(|(a, b)| rel(*a, *b))
            .fold(rel(self.gamma, self.gamma_direct), f64::max)
    }
}

/// Portfolio and total-wealth wedges of the delayed model against the same
/// scenario with `φ ≡ 0`.
pub fn benchmark_wedges(
    w: f64,
    state: &IncomeState,
    with_delay: &DerivedConstants,
    without_delay: &DerivedConstants,
) -> Result<Wedges> {
    let y = state.y;
    let past = inner_product(&with_delay.h_inf, &state.history(), with_delay.grid.ds())?;
    let dg = with_delay.g_inf - without_delay.g_inf;
    let gamma = y * dg + past;
    let inv_gamma = 1.0 / with_delay.gamma;
    let kappa_over_gamma: DVector<f64> = &with_delay.kappa * inv_gamma;
    let inner: DVector<f64> =
        (&kappa_over_gamma - &with_delay.sigma_y) * (dg * y) + &kappa_over_gamma * past;
    let theta = with_delay.solve_sigma_t(&inner)?;

    let a = feedback(w, state, with_delay)?;
    let b = feedback(w, state, without_delay)?;
    let theta_direct = a.theta.iter().zip(&b.theta).map(|(x, z)| x - z).collect();
    let gamma_direct =
        (w + human_capital(state, with_delay)?) - (w + human_capital(state, without_delay)?);
    Ok(Wedges {
        theta: theta.iter().copied().collect(),
        gamma,
        theta_direct,
        gamma_direct,
    })
}
