//! Human capital, total wealth and the state-price-density oracle.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::constants::DerivedConstants;
use crate::error::{Error, Result};
use crate::estimate::{map_paths, MCEstimate};
use crate::income::{step_count, IncomeModel, IncomeState};
use crate::params::ModelParams;
use crate::quadrature::{dot, inner_product};
use crate::rng::{fill_increments, path_rng, BrownianPath};

/// Values of `ξ` along a Brownian path, `ξ(0) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePriceDensityPath {
    pub dt: f64,
    pub values: Vec<f64>,
}

/// Exact log-space recursion `ξ ← ξ exp(-(r+δ+½κᵀκ)dt - κᵀdZ)`.
pub fn state_price_density(
    kappa: &DVector<f64>,
    r: f64,
    delta: f64,
    brownian: &BrownianPath,
) -> Result<StatePriceDensityPath> {
    if brownian.n != kappa.len() {
        return Err(Error::DimensionMismatch {
            what: "brownian",
            expected: kappa.len(),
            actual: brownian.n,
        });
    }
    let drift = -(r + delta + 0.5 * kappa.dot(kappa)) * brownian.dt;
    let mut log_xi = 0.0_f64;
    let mut values = Vec::with_capacity(brownian.steps() + 1);
    values.push(1.0);
    for k in 0..brownian.steps() {
        let shock: f64 = kappa
            .iter()
            .zip(brownian.increment(k))
            .map(|(a, z)| a * z)
            .sum();
        log_xi += drift - shock;
        values.push(log_xi.exp());
    }
    Ok(StatePriceDensityPath {
        dt: brownian.dt,
        values,
    })
}

/// `g∞ y + ⟨h∞, x₁⟩` with the trapezoid inner product on the delay grid.
pub fn human_capital(state: &IncomeState, consts: &DerivedConstants) -> Result<f64> {
    if state.grid() != consts.grid {
        return Err(Error::GridMismatch {
            expected: consts.grid.len(),
            actual: state.grid().len(),
        });
    }
    let past = inner_product(&consts.h_inf, &state.history(), consts.grid.ds())?;
    Ok(consts.g_inf * state.y + past)
}

/// Where the inner product `⟨h∞, x₁⟩` is evaluated during simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MemoryQuadrature {
    /// The `m + 1` delay-grid nodes.
    DelayGrid,
    /// Every stored history value at the simulation step.
    #[default]
    StepGrid,
}

/// Precomputed human-capital evaluator for states laid out at refinement `p`.
#[derive(Debug, Clone)]
pub struct HumanCapitalWeights {
    g_inf: f64,
    p: usize,
    stride: usize,
    weights: Vec<f64>,
    running: Option<ExpWindow>,
}

/// Sliding trapezoid sums for `h∞ = Σ c_k e^{λ_k s}`. Moving the window by
/// one step rescales each sum by `e^{-λ_k dt}`, so an update is O(1).
#[derive(Debug, Clone)]
struct ExpWindow {
    coef: Vec<f64>,
    rate: Vec<f64>,
    shift: Vec<f64>,
    /// `e^{-λ_k d}`, the factor on the oldest value.
    oldest: Vec<f64>,
    dt: f64,
    len: usize,
}

/// Per-path running sums used by the O(1) evaluator; empty otherwise.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemorySums {
    sums: Vec<f64>,
    since_refresh: usize,
}

impl HumanCapitalWeights {
    pub fn new(consts: &DerivedConstants, p: usize, quadrature: MemoryQuadrature) -> Self {
        match quadrature {
            MemoryQuadrature::DelayGrid => {
                let weights = consts
                    .h_inf
                    .iter()
                    .zip(consts.grid.trapezoid_weights())
                    .map(|(h, w)| h * w)
                    .collect();
                Self {
                    g_inf: consts.g_inf,
                    p,
                    stride: p,
                    weights,
                    running: None,
                }
            }
            MemoryQuadrature::StepGrid => {
                let dt = consts.grid.ds() / p as f64;
                let running = consts.memory_exponentials().map(|terms| ExpWindow {
                    coef: terms.iter().map(|t| t.0).collect(),
                    rate: terms.iter().map(|t| t.1).collect(),
                    shift: terms.iter().map(|t| (-t.1 * dt).exp()).collect(),
                    oldest: terms.iter().map(|t| (-t.1 * consts.grid.d).exp()).collect(),
                    dt,
                    len: consts.grid.m * p + 1,
                });
                Self {
                    g_inf: consts.g_inf,
                    p,
                    stride: 1,
                    weights: consts.weighted_memory(p),
                    running,
                }
            }
        }
    }

    /// Same evaluator without the O(1) path, for independent recomputation.
    pub fn direct(&self) -> Self {
        Self {
            running: None,
            ..self.clone()
        }
    }

    #[inline]
    pub fn past_component(&self, state: &IncomeState) -> f64 {
        debug_assert_eq!(state.refinement(), self.p);
        if self.stride == 1 {
            return dot(&self.weights, state.fine_history());
        }
        let mut acc = 0.0;
        for (w, y) in self
            .weights
            .iter()
            .zip(state.fine_history().iter().step_by(self.stride))
        {
            acc += w * y;
        }
        acc
    }

    #[inline]
    pub fn value(&self, state: &IncomeState) -> f64 {
        self.g_inf * state.y + self.past_component(state)
    }

    /// Fresh running sums for `state`.
    pub fn sums(&self, state: &IncomeState) -> MemorySums {
        match &self.running {
            None => MemorySums::default(),
            Some(win) => {
                let hist = state.fine_history();
                let sums = win
                    .rate
                    .iter()
                    .zip(&win.oldest)
                    .map(|(&l, &o)| {
                        let e = (l * win.dt).exp();
                        let mut f = o;
                        let mut acc = 0.0;
                        for y in hist {
                            acc += f * y;
                            f *= e;
                        }
                        acc
                    })
                    .collect();
                MemorySums {
                    sums,
                    since_refresh: 0,
                }
            }
        }
    }

    /// Value using running sums when available.
    #[inline]
    pub fn value_with(&self, state: &IncomeState, sums: &MemorySums) -> f64 {
        match &self.running {
            None => self.value(state),
            Some(win) => {
                let hist = state.fine_history();
                let (first, last) = (hist[0], hist[hist.len() - 1]);
                let mut past = 0.0;
                for k in 0..win.coef.len() {
                    past += win.coef[k] * (sums.sums[k] - 0.5 * (win.oldest[k] * first + last));
                }
                self.g_inf * state.y + win.dt * past
            }
        }
    }

    /// Moves the sums one step: `leaving` is the oldest value before the
    /// step, `state` the state after it.
    #[inline]
    pub fn advance_sums(&self, sums: &mut MemorySums, leaving: f64, state: &IncomeState) {
        if let Some(win) = &self.running {
            sums.since_refresh += 1;
            if sums.since_refresh >= win.len {
                *sums = self.sums(state);
                return;
            }
            for k in 0..win.coef.len() {
                sums.sums[k] = win.shift[k] * (sums.sums[k] - win.oldest[k] * leaving) + state.y;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Interior,
    Boundary,
    Inadmissible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TotalWealth {
    pub value: f64,
    pub human_capital: f64,
    pub tol: f64,
    pub region: Region,
}

/// Default relative width of the boundary band.
pub const BOUNDARY_TOL: f64 = 1e-12;

pub fn classify(gamma: f64, tol: f64) -> Region {
    if gamma > tol {
        Region::Interior
    } else if gamma >= -tol {
        Region::Boundary
    } else {
        Region::Inadmissible
    }
}

/// `Γ∞ = w + human capital`, classified against `tol_rel · max(1, |w|, |HC|)`.
pub fn gamma_total_with(w: f64, human_capital: f64, tol_rel: f64) -> TotalWealth {
    let value = w + human_capital;
    let tol = tol_rel * 1f64.max(w.abs()).max(human_capital.abs());
    TotalWealth {
        value,
        human_capital,
        tol,
        region: classify(value, tol),
    }
}

pub fn gamma_total(w: f64, state: &IncomeState, consts: &DerivedConstants) -> Result<TotalWealth> {
    Ok(gamma_total_with(
        w,
        human_capital(state, consts)?,
        BOUNDARY_TOL,
    ))
}

/// Tail bound for `∫_T^∞ E[ξ(u) y(u)] du` from the slowest decay rate of
/// discounted expected income.
pub fn human_capital_tail_bound(
    consts: &DerivedConstants,
    state: &IncomeState,
    horizon: f64,
) -> f64 {
    let lambda = consts.income_decay_rate();
    let a = consts.discount_rate + lambda;
    let fine = state.fine_history();
    let dt = state.dt();
    let last = fine.len() - 1;
    let scale = fine
        .iter()
        .enumerate()
        .map(|(i, y)| {
            let s = -((last - i) as f64) * dt;
            y.abs() * (-a * s).exp()
        })
        .fold(state.y.abs(), f64::max);
    scale * (lambda * horizon).exp() / lambda.abs()
}

/// Smallest horizon, a whole number of `dt` steps, whose tail bound is at
/// most `rel` of `target`.
pub fn human_capital_horizon(
    consts: &DerivedConstants,
    state: &IncomeState,
    target: f64,
    rel: f64,
    dt: f64,
) -> f64 {
    let base = human_capital_tail_bound(consts, state, 0.0);
    let lambda = consts.income_decay_rate();
    if base <= rel * target.abs() {
        return 0.0;
    }
    let t = (base / (rel * target.abs())).ln() / lambda.abs();
    (t / dt).ceil() * dt
}

/// Monte Carlo value of `E ∫_0^T ξ(u) y(u) du` on coupled `(y, ξ)` paths,
/// with trapezoid quadrature in time.
pub fn human_capital_mc_oracle(
    params: &ModelParams,
    consts: &DerivedConstants,
    state: &IncomeState,
    horizon: f64,
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<MCEstimate> {
    let model = IncomeModel::new(&params.income, dt)?;
    let steps = step_count(horizon, dt)?;
    let grid = params.income.grid;
    let history = state.history();
    let past = &history[..grid.m];
    let start = model.initial_state(grid, state.y, past)?;
    let n = consts.n();
    let kappa: Vec<f64> = consts.kappa.iter().copied().collect();
    let drift = -(consts.discount_rate + 0.5 * consts.kappa.dot(&consts.kappa)) * dt;
    let sqrt_dt = dt.sqrt();

    let samples = map_paths(n_paths, |j| {
        let mut rng = path_rng(seed, j);
        let mut dz = vec![0.0; n];
        let mut income = start.clone();
        let mut log_xi = 0.0_f64;
        let mut prev = income.y;
        let mut acc = 0.0;
        for _ in 0..steps {
            fill_increments(&mut rng, sqrt_dt, &mut dz);
            model.advance(&mut income, &dz);
            log_xi += drift - kappa.iter().zip(&dz).map(|(a, z)| a * z).sum::<f64>();
            let cur = log_xi.exp() * income.y;
            acc += 0.5 * (prev + cur) * dt;
            prev = cur;
        }
        acc
    });
    let bound = human_capital_tail_bound(consts, &start, horizon);
    Ok(MCEstimate::from_samples(&samples, bound, horizon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Kernel;
    use crate::params::{IncomeParams, MarketParams, Preferences};
    use crate::rng::SeedRecord;
    use approx::assert_relative_eq;

    fn params(kernel: Kernel, mu: f64, sigma_y: f64) -> ModelParams {
        ModelParams {
            market: MarketParams::scalar(0.02, mu, 0.2),
            prefs: Preferences {
                rho: 0.03,
                gamma: 0.5,
                k: 1.0,
                delta: 0.01,
            },
            income: IncomeParams::new(0.01, vec![sigma_y], 2.0, 50, kernel).unwrap(),
        }
    }

    #[test]
    fn density_without_risk_premium_is_deterministic() {
        let b = BrownianPath::generate(1, 100, 0.01, SeedRecord::new(1, 0)).unwrap();
        let xi = state_price_density(&DVector::from_element(1, 0.0), 0.02, 0.01, &b).unwrap();
        assert_eq!(xi.values[0], 1.0);
        for (k, v) in xi.values.iter().enumerate() {
            assert_relative_eq!(*v, (-0.03 * k as f64 * 0.01).exp(), max_relative = 1e-13);
        }
    }

    #[test]
    fn zero_kernel_human_capital_is_income_over_beta() {
        let p = params(Kernel::Zero, 0.06, 0.1);
        let c = DerivedConstants::new(&p).unwrap();
        let s = IncomeState::constant_past(1.0, 1.0, p.income.grid, 1).unwrap();
        assert_eq!(human_capital(&s, &c).unwrap(), 1.0 / c.beta);
        let zero = IncomeState::constant_past(0.0, 0.0, p.income.grid, 1).unwrap();
        assert_eq!(human_capital(&zero, &c).unwrap(), 0.0);
    }

    #[test]
    fn total_wealth_classification() {
        let p = params(Kernel::Constant { value: 0.01 }, 0.06, 0.1);
        let c = DerivedConstants::new(&p).unwrap();
        let s = IncomeState::constant_past(1.0, 1.0, p.income.grid, 1).unwrap();
        let hc = human_capital(&s, &c).unwrap();
        assert_eq!(gamma_total(-hc, &s, &c).unwrap().region, Region::Boundary);
        assert_eq!(
            gamma_total(-hc - 1e-6, &s, &c).unwrap().region,
            Region::Inadmissible
        );
        let zero = IncomeState::constant_past(0.0, 0.0, p.income.grid, 1).unwrap();
        let g = gamma_total(1.0, &zero, &c).unwrap();
        assert_eq!(g.value, 1.0);
        assert_eq!(g.region, Region::Interior);
    }

    #[test]
    fn deterministic_oracle_matches_the_integral() {
        // κ = 0, σ_y = 0, φ = 0: ∫_0^T x₀ e^{-βu} du
        let p = params(Kernel::Zero, 0.02, 0.0);
        let c = DerivedConstants::new(&p).unwrap();
        let s = IncomeState::constant_past(1.0, 1.0, p.income.grid, 1).unwrap();
        let dt = 0.04 / 40.0;
        let est = human_capital_mc_oracle(&p, &c, &s, 50.0, 4, dt, 1).unwrap();
        let beta = c.beta;
        assert_eq!(est.stderr, 0.0);
        assert_relative_eq!(
            est.mean,
            (1.0 - (-beta * 50.0).exp()) / beta,
            max_relative = 1e-5
        );
        let tail = (-beta * 50.0).exp() / beta;
        assert!(est.truncation_bound >= tail && est.truncation_bound < 1.03 * tail);
    }

    #[test]
    fn zero_income_oracle_is_exactly_zero() {
        let p = params(Kernel::Constant { value: 0.01 }, 0.06, 0.1);
        let c = DerivedConstants::new(&p).unwrap();
        let s = IncomeState::constant_past(0.0, 0.0, p.income.grid, 1).unwrap();
        let est = human_capital_mc_oracle(&p, &c, &s, 10.0, 20, 0.04, 3).unwrap();
        assert_eq!(est.mean, 0.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn running_sums_track_the_direct_dot_product() {
        let p = params(Kernel::Constant { value: 0.01 }, 0.06, 0.1);
        let c = DerivedConstants::new(&p).unwrap();
        let model = IncomeModel::new(&p.income, 0.004).unwrap();
        let mut state = model.initial_state(p.income.grid, 1.0, &[1.0; 50]).unwrap();
        let hc = HumanCapitalWeights::new(&c, model.p, MemoryQuadrature::StepGrid);
        let mut sums = hc.sums(&state);
        let b = BrownianPath::generate(1, 3000, 0.004, SeedRecord::new(2, 0)).unwrap();
        for k in 0..3000 {
            let leaving = state.fine_history()[0];
            model.advance(&mut state, b.increment(k));
            hc.advance_sums(&mut sums, leaving, &state);
            let direct = hc.value(&state);
            assert!((hc.value_with(&state, &sums) - direct).abs() < 1e-12 * direct.abs());
        }
    }

    #[test]
    fn step_grid_and_delay_grid_agree_on_smooth_history() {
        let p = params(Kernel::Constant { value: 0.01 }, 0.06, 0.1);
        let c = DerivedConstants::new(&p).unwrap();
        let s = IncomeState::constant_past(1.2, 1.0, p.income.grid, 10).unwrap();
        let coarse = HumanCapitalWeights::new(&c, 10, MemoryQuadrature::DelayGrid).value(&s);
        let fine = HumanCapitalWeights::new(&c, 10, MemoryQuadrature::StepGrid).value(&s);
        assert_relative_eq!(coarse, human_capital(&s, &c).unwrap(), max_relative = 1e-14);
        assert!((coarse - fine).abs() < 1e-5 * coarse);
    }
}
