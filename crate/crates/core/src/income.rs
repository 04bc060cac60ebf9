//! Labor income with delayed feedback: Euler–Maruyama on a rolling history
//! buffer, and a pathwise variation-of-constants oracle.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::params::IncomeParams;
use crate::quadrature::{inner_product, DelayGrid};
use crate::rng::{BrownianPath, SeedRecord};

/// Trapezoid value of `∫_{-d}^0 φ(s) y(t+s) ds` for samples on the delay grid.
pub fn convolve(history: &[f64], kernel: &[f64], ds: f64) -> Result<f64> {
    inner_product(kernel, history, ds)
}

/// Number of simulation steps per grid cell, or `StepIncompatible`.
pub fn substeps(dt: f64, ds: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::StepIncompatible { dt, ds });
    }
    let ratio = ds / dt;
    let p = ratio.round();
    if p < 1.0 || (ratio - p).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::StepIncompatible { dt, ds });
    }
    Ok(p as usize)
}

/// Number of steps of size `dt` in `horizon`, which must be a whole multiple.
pub fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "horizon must be >= 0, got {horizon}"
        )));
    }
    let ratio = horizon / dt;
    let n = ratio.round();
    if (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} is not a multiple of dt = {dt}"
        )));
    }
    Ok(n as usize)
}

/// Income level plus its history on `[t-d, t]`.
///
/// The history is kept at the simulation resolution `dt = ds/p` in a ring
/// that is written twice, so the current window is always one contiguous
/// slice. The delay-grid view samples every `p`-th value.
#[derive(Debug, Clone, PartialEq)]
pub struct IncomeState {
    pub t: f64,
    pub y: f64,
    grid: DelayGrid,
    p: usize,
    ring: Vec<f64>,
    head: usize,
}

impl IncomeState {
    /// `past` holds `x₁` at the `m` grid nodes strictly before 0; the right
    /// endpoint of the window is `x0`. Between nodes the past is linear.
    pub fn new(x0: f64, past: &[f64], grid: DelayGrid, p: usize) -> Result<Self> {
        if past.len() != grid.m {
            return Err(Error::GridMismatch {
                expected: grid.m,
                actual: past.len(),
            });
        }
        if p == 0 {
            return Err(Error::InvalidArgument(
                "history refinement must be >= 1".into(),
            ));
        }
        let len = grid.m * p + 1;
        let mut window = Vec::with_capacity(len);
        for i in 0..len {
            let j = i / p;
            let frac = (i % p) as f64 / p as f64;
            let left = if j < grid.m { past[j] } else { x0 };
            let right = if j + 1 < grid.m { past[j + 1] } else { x0 };
            window.push(if frac == 0.0 {
                left
            } else {
                left * (1.0 - frac) + right * frac
            });
        }
        window[len - 1] = x0;
        let mut ring = window.clone();
        ring.extend_from_slice(&window);
        Ok(Self {
            t: 0.0,
            y: x0,
            grid,
            p,
            ring,
            head: 0,
        })
    }

    /// Income that has been flat at `level` before time 0.
    pub fn constant_past(x0: f64, level: f64, grid: DelayGrid, p: usize) -> Result<Self> {
        Self::new(x0, &vec![level; grid.m], grid, p)
    }

    pub fn grid(&self) -> DelayGrid {
        self.grid
    }

    /// Fine steps per grid cell.
    pub fn refinement(&self) -> usize {
        self.p
    }

    pub fn ds(&self) -> f64 {
        self.grid.ds()
    }

    /// Simulation step the buffer is laid out for.
    pub fn dt(&self) -> f64 {
        self.grid.ds() / self.p as f64
    }

    fn window_len(&self) -> usize {
        self.grid.m * self.p + 1
    }

    /// The history at resolution `dt`, oldest first; the last entry is `y`.
    #[inline]
    pub fn fine_history(&self) -> &[f64] {
        &self.ring[self.head..self.head + self.window_len()]
    }

    /// The history on the `m + 1` delay-grid nodes.
    pub fn history(&self) -> Vec<f64> {
        self.fine_history()
            .iter()
            .step_by(self.p)
            .copied()
            .collect()
    }

    /// Appends the next value and moves the window forward by `dt`.
    #[inline]
    pub fn push(&mut self, y: f64) {
        let len = self.window_len();
        // The slot being retired is at head; after the move the new value
        // must sit at the end of the window starting at head + 1.
        self.ring[self.head] = y;
        self.ring[self.head + len] = y;
        self.head += 1;
        if self.head == len {
            self.head = 0;
        }
        self.y = y;
        self.t += self.dt();
    }

    /// Multiplies the level and the whole history by `a`.
    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.y *= a;
        for v in out.ring.iter_mut() {
            *v *= a;
        }
        out
    }
}

/// Income dynamics with the kernel weights laid out for fast stepping.
#[derive(Debug, Clone)]
pub struct IncomeModel {
    pub mu_y: f64,
    pub sigma_y: DVector<f64>,
    pub dt: f64,
    pub p: usize,
    /// Trapezoid weight times `φ` at each grid node.
    weights: Vec<f64>,
}

impl IncomeModel {
    pub fn new(income: &IncomeParams, dt: f64) -> Result<Self> {
        let grid = income.grid;
        let p = substeps(dt, grid.ds())?;
        let weights = income
            .kernel
            .on_grid(&grid)
            .iter()
            .zip(grid.trapezoid_weights())
            .map(|(phi, w)| phi * w)
            .collect();
        Ok(Self {
            mu_y: income.mu_y,
            sigma_y: income.sigma_y.clone(),
            dt,
            p,
            weights,
        })
    }

    /// State at `t = 0` laid out for this model's step.
    pub fn initial_state(&self, grid: DelayGrid, x0: f64, past: &[f64]) -> Result<IncomeState> {
        IncomeState::new(x0, past, grid, self.p)
    }

    /// Delay drift `∫ φ(s) y(t+s) ds` on the delay grid.
    #[inline]
    pub fn delay_drift(&self, state: &IncomeState) -> f64 {
        let mut acc = 0.0;
        for (w, y) in self
            .weights
            .iter()
            .zip(state.fine_history().iter().step_by(self.p))
        {
            acc += w * y;
        }
        acc
    }

    /// Income increment for one step driven by `dz`.
    #[inline]
    pub fn increment(&self, state: &IncomeState, dz: &[f64]) -> f64 {
        let y = state.y;
        let mut noise = 0.0;
        for (s, z) in self.sigma_y.iter().zip(dz) {
            noise += s * z;
        }
        (self.mu_y * y + self.delay_drift(state)) * self.dt + y * noise
    }

    /// One Euler–Maruyama step; returns `true` if income changed sign from
    /// positive to non-positive.
    #[inline]
    pub fn advance(&self, state: &mut IncomeState, dz: &[f64]) -> bool {
        let before = state.y;
        let next = before + self.increment(state, dz);
        state.push(next);
        before > 0.0 && next <= 0.0
    }

    /// Checked single step.
    pub fn step(&self, state: &IncomeState, dz: &[f64], dt: f64) -> Result<IncomeState> {
        if state.refinement() != self.p || substeps(dt, state.ds())? != self.p {
            return Err(Error::StepIncompatible { dt, ds: state.ds() });
        }
        if dz.len() != self.sigma_y.len() {
            return Err(Error::DimensionMismatch {
                what: "dZ",
                expected: self.sigma_y.len(),
                actual: dz.len(),
            });
        }
        let mut next = state.clone();
        self.advance(&mut next, dz);
        Ok(next)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncomePath {
    pub dt: f64,
    /// `y(k dt)` for `k = 0..=steps`.
    pub y: Vec<f64>,
    /// Steps where income went from positive to non-positive.
    pub sign_crossings: usize,
}

impl IncomePath {
    pub fn times(&self) -> Vec<f64> {
        (0..self.y.len()).map(|k| k as f64 * self.dt).collect()
    }

    pub fn min(&self) -> f64 {
        self.y.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Runs the income equation on given increments.
pub fn simulate_income_on(
    income: &IncomeParams,
    x0: f64,
    past: &[f64],
    brownian: &BrownianPath,
) -> Result<IncomePath> {
    if brownian.n != income.sigma_y.len() {
        return Err(Error::DimensionMismatch {
            what: "brownian",
            expected: income.sigma_y.len(),
            actual: brownian.n,
        });
    }
    let model = IncomeModel::new(income, brownian.dt)?;
    let mut state = model.initial_state(income.grid, x0, past)?;
    let mut y = Vec::with_capacity(brownian.steps() + 1);
    y.push(x0);
    let mut sign_crossings = 0;
    for k in 0..brownian.steps() {
        if model.advance(&mut state, brownian.increment(k)) {
            sign_crossings += 1;
        }
        y.push(state.y);
    }
    Ok(IncomePath {
        dt: brownian.dt,
        y,
        sign_crossings,
    })
}

/// Draws increments from `seed` and runs the income equation to `horizon`.
pub fn simulate_income(
    income: &IncomeParams,
    x0: f64,
    past: &[f64],
    horizon: f64,
    dt: f64,
    seed: SeedRecord,
) -> Result<(IncomePath, BrownianPath)> {
    substeps(dt, income.grid.ds())?;
    let steps = step_count(horizon, dt)?;
    let brownian = BrownianPath::generate(income.sigma_y.len(), steps, dt, seed)?;
    let path = simulate_income_on(income, x0, past, &brownian)?;
    Ok((path, brownian))
}

/// `y(t) = E(t)(x₀ + I(t))` with the stochastic exponential `E` taken exactly
/// from the increments and `I` accumulated by left-Riemann sums of
/// `E⁻¹(u) ∫φ(s)y(u+s)ds`.
pub fn variation_of_constants_oracle(
    income: &IncomeParams,
    x0: f64,
    past: &[f64],
    brownian: &BrownianPath,
) -> Result<IncomePath> {
    if brownian.n != income.sigma_y.len() {
        return Err(Error::DimensionMismatch {
            what: "brownian",
            expected: income.sigma_y.len(),
            actual: brownian.n,
        });
    }
    let dt = brownian.dt;
    let model = IncomeModel::new(income, dt)?;
    let mut state = model.initial_state(income.grid, x0, past)?;
    let sigma_sq = income.sigma_y.dot(&income.sigma_y);
    let log_drift = (income.mu_y - 0.5 * sigma_sq) * dt;

    let mut log_e = 0.0_f64;
    let mut integral = 0.0_f64;
    let mut y = Vec::with_capacity(brownian.steps() + 1);
    y.push(x0);
    let mut sign_crossings = 0;
    for k in 0..brownian.steps() {
        integral += (-log_e).exp() * model.delay_drift(&state) * dt;
        let dz = brownian.increment(k);
        log_e += log_drift
            + income
                .sigma_y
                .iter()
                .zip(dz)
                .map(|(s, z)| s * z)
                .sum::<f64>();
        let next = log_e.exp() * (x0 + integral);
        if state.y > 0.0 && next <= 0.0 {
            sign_crossings += 1;
        }
        state.push(next);
        y.push(next);
    }
    Ok(IncomePath {
        dt,
        y,
        sign_crossings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Kernel;
    use crate::rng::SeedRecord;
    use approx::assert_relative_eq;

    fn params(mu_y: f64, sigma_y: f64, d: f64, m: usize, kernel: Kernel) -> IncomeParams {
        IncomeParams::new(mu_y, vec![sigma_y], d, m, kernel).unwrap()
    }

    #[test]
    fn convolve_examples() {
        let grid = DelayGrid::new(2.0, 10).unwrap();
        assert_eq!(convolve(&[3.0; 11], &[0.0; 11], grid.ds()).unwrap(), 0.0);
        let v = convolve(&[3.0; 11], &[0.05; 11], grid.ds()).unwrap();
        assert!((v - 3.0 * 0.05 * 2.0).abs() < 1e-12);

        let grid = DelayGrid::new(1.0, 100).unwrap();
        let hist: Vec<f64> = grid.nodes().iter().map(|s| s.exp()).collect();
        let v = convolve(&hist, &[1.0; 101], grid.ds()).unwrap();
        assert!((v - (1.0 - (-1.0f64).exp())).abs() < 1e-4);

        assert!(matches!(
            convolve(&[1.0; 3], &[1.0; 4], 0.1),
            Err(Error::GridMismatch { .. })
        ));
    }

    #[test]
    fn buffer_endpoint_tracks_income() {
        let inc = params(0.01, 0.1, 2.0, 10, Kernel::Constant { value: 0.01 });
        let model = IncomeModel::new(&inc, 0.05).unwrap();
        let mut state = model.initial_state(inc.grid, 1.0, &[1.0; 10]).unwrap();
        let brownian = BrownianPath::generate(1, 200, 0.05, SeedRecord::new(3, 0)).unwrap();
        for k in 0..200 {
            model.advance(&mut state, brownian.increment(k));
            assert_eq!(*state.fine_history().last().unwrap(), state.y);
            assert_eq!(state.history()[10], state.y);
            assert_eq!(state.history().len(), 11);
        }
    }

    #[test]
    fn window_slides_by_one_value_per_step() {
        let grid = DelayGrid::new(1.0, 2).unwrap();
        let mut state = IncomeState::new(5.0, &[1.0, 3.0], grid, 2).unwrap();
        assert_eq!(state.fine_history(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
        state.push(6.0);
        assert_eq!(state.fine_history(), &[2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(state.history(), vec![2.0, 4.0, 6.0]);
        for v in 7..12 {
            state.push(v as f64);
        }
        assert_eq!(state.fine_history(), &[7.0, 8.0, 9.0, 10.0, 11.0]);
    }

    #[test]
    fn incompatible_step_is_rejected() {
        let inc = params(0.01, 0.0, 2.0, 50, Kernel::Zero);
        assert!(matches!(
            IncomeModel::new(&inc, 0.03),
            Err(Error::StepIncompatible { .. })
        ));
        let model = IncomeModel::new(&inc, 0.01).unwrap();
        let state = model.initial_state(inc.grid, 1.0, &[1.0; 50]).unwrap();
        assert!(matches!(
            model.step(&state, &[0.0], 0.02),
            Err(Error::StepIncompatible { .. })
        ));
        assert!(model.step(&state, &[0.0], 0.01).is_ok());
    }

    #[test]
    fn deterministic_growth_without_delay() {
        let inc = params(0.01, 0.0, 1.0, 10, Kernel::Zero);
        let (path, _) =
            simulate_income(&inc, 2.0, &[2.0; 10], 1.0, 1e-3, SeedRecord::new(0, 0)).unwrap();
        assert_relative_eq!(
            *path.y.last().unwrap(),
            2.0 * 0.01f64.exp(),
            max_relative = 1e-4
        );
    }

    #[test]
    fn zero_horizon_and_zero_data() {
        let inc = params(0.01, 0.1, 1.0, 10, Kernel::Constant { value: 0.1 });
        let (path, b) =
            simulate_income(&inc, 1.5, &[1.0; 10], 0.0, 0.01, SeedRecord::new(0, 0)).unwrap();
        assert_eq!(path.y, vec![1.5]);
        assert_eq!(b.steps(), 0);

        let b = BrownianPath::generate(1, 100, 0.01, SeedRecord::new(5, 0)).unwrap();
        let oracle = variation_of_constants_oracle(&inc, 0.0, &[0.0; 10], &b).unwrap();
        assert!(oracle.y.iter().all(|&y| y == 0.0));
    }

    #[test]
    fn oracle_without_delay_is_the_exact_exponential() {
        let inc = params(0.02, 0.3, 1.0, 10, Kernel::Zero);
        let b = BrownianPath::generate(1, 500, 0.01, SeedRecord::new(9, 2)).unwrap();
        let oracle = variation_of_constants_oracle(&inc, 1.0, &[1.0; 10], &b).unwrap();
        let z = b.cumulative();
        for (k, y) in oracle.y.iter().enumerate() {
            let t = k as f64 * 0.01;
            let exact = ((0.02 - 0.045) * t + 0.3 * z[k][0]).exp();
            assert_relative_eq!(*y, exact, max_relative = 1e-12);
        }
    }

    #[test]
    fn determinism() {
        let inc = params(0.01, 0.1, 2.0, 50, Kernel::Constant { value: 0.01 });
        let a = simulate_income(&inc, 1.0, &[1.0; 50], 5.0, 0.004, SeedRecord::new(42, 7)).unwrap();
        let b = simulate_income(&inc, 1.0, &[1.0; 50], 5.0, 0.004, SeedRecord::new(42, 7)).unwrap();
        assert_eq!(a, b);
    }
}
