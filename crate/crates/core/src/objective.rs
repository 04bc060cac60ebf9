//! Closed-form value function and Monte Carlo estimates of the objective.

use std::fmt;
use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::constants::DerivedConstants;
use crate::error::{Error, Result};
use crate::estimate::{map_paths, MCEstimate};
use crate::income::{step_count, IncomeState};
use crate::params::{ModelParams, Preferences};
use crate::policy::{ClosedLoop, LoopConfig};
use crate::rng::{fill_increments, path_rng};
use crate::valuation::{gamma_total, Region};

/// Utility value that may be `-∞` (power utility with `γ > 1` at zero).
/// Never NaN: arithmetic with the sentinel stays the sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Utility {
    Finite(f64),
    NegInfinity,
}

impl Utility {
    pub fn is_finite(&self) -> bool {
        matches!(self, Utility::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            Utility::Finite(v) => Some(*v),
            Utility::NegInfinity => None,
        }
    }

    /// `-∞` as an `f64`, for reporting only.
    pub fn to_f64(&self) -> f64 {
        self.finite().unwrap_or(f64::NEG_INFINITY)
    }

    pub fn scale(self, a: f64) -> Utility {
        match self {
            Utility::Finite(v) => Utility::Finite(a * v),
            Utility::NegInfinity => Utility::NegInfinity,
        }
    }
}

impl Add for Utility {
    type Output = Utility;

    fn add(self, rhs: Utility) -> Utility {
        match (self, rhs) {
            (Utility::Finite(a), Utility::Finite(b)) => Utility::Finite(a + b),
            _ => Utility::NegInfinity,
        }
    }
}

impl fmt::Display for Utility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Utility::Finite(v) => write!(f, "{v}"),
            Utility::NegInfinity => f.write_str("-inf"),
        }
    }
}

#[inline]
fn power_utility(x: f64, gamma: f64) -> Utility {
    if x == 0.0 && gamma > 1.0 {
        Utility::NegInfinity
    } else {
        let e = 1.0 - gamma;
        Utility::Finite(x.powf(e) / e)
    }
}

/// `c^{1-γ}/(1-γ) + δ (kB)^{1-γ}/(1-γ)`.
#[inline]
pub fn utility_rate(c: f64, bequest: f64, prefs: &Preferences) -> Result<Utility> {
    if c < 0.0 || c.is_nan() {
        return Err(Error::NegativeControl {
            name: "c",
            value: c,
        });
    }
    if bequest < 0.0 || bequest.is_nan() {
        return Err(Error::NegativeControl {
            name: "B",
            value: bequest,
        });
    }
    let consumption = power_utility(c, prefs.gamma);
    let legacy = if prefs.delta == 0.0 {
        Utility::Finite(0.0)
    } else {
        power_utility(prefs.k * bequest, prefs.gamma).scale(prefs.delta)
    };
    Ok(consumption + legacy)
}

/// `f∞^γ Γ^{1-γ}/(1-γ)` at total wealth `gamma ≥ 0`.
pub fn value_at(gamma: f64, consts: &DerivedConstants) -> Utility {
    let g = consts.gamma;
    if gamma <= 0.0 {
        if g > 1.0 {
            return Utility::NegInfinity;
        }
        return Utility::Finite(0.0);
    }
    Utility::Finite(consts.f_inf.powf(g) * gamma.powf(1.0 - g) / (1.0 - g))
}

pub fn value_function(w: f64, state: &IncomeState, consts: &DerivedConstants) -> Result<Utility> {
    let total = gamma_total(w, state, consts)?;
    match total.region {
        Region::Inadmissible => Err(Error::InadmissibleState {
            gamma: total.value,
            tol: total.tol,
        }),
        Region::Boundary => Ok(value_at(0.0, consts)),
        Region::Interior => Ok(value_at(total.value, consts)),
    }
}

/// Decay rate of expected discounted utility when consumption is
/// `scale` times optimal: `1/ν + (1-γ)(scale-1)/f∞`.
pub fn utility_decay_rate(consts: &DerivedConstants, consumption_scale: f64) -> f64 {
    1.0 / consts.nu + (1.0 - consts.gamma) * (consumption_scale - 1.0) / consts.f_inf
}

/// Closed-form objective when consumption is `scale` times optimal and the
/// rest of the policy is unchanged. `None` if the integral diverges.
pub fn scaled_policy_value(
    consts: &DerivedConstants,
    gamma0: f64,
    consumption_scale: f64,
) -> Option<f64> {
    let rate = utility_decay_rate(consts, consumption_scale);
    if !(rate > 0.0) || !(gamma0 > 0.0) {
        return None;
    }
    let g = consts.gamma;
    let d = consts.delta * consts.bequest_factor;
    let flow =
        (consumption_scale.powf(1.0 - g) + d) * (gamma0 / consts.f_inf).powf(1.0 - g) / (1.0 - g);
    Some(flow / rate)
}

/// Size of what truncating the objective at `horizon` leaves out, for the
/// given consumption scale: `|J| e^{-rate·T}`. For the optimal policy this
/// is `|V(Γ₀)| e^{-T/ν}`.
pub fn truncation_bound_scaled(
    consts: &DerivedConstants,
    gamma0: f64,
    horizon: f64,
    consumption_scale: f64,
) -> f64 {
    if gamma0 <= 0.0 {
        return if consts.gamma > 1.0 {
            f64::INFINITY
        } else {
            0.0
        };
    }
    match scaled_policy_value(consts, gamma0, consumption_scale) {
        Some(j) => j.abs() * (-utility_decay_rate(consts, consumption_scale) * horizon).exp(),
        None => f64::INFINITY,
    }
}

pub fn truncation_bound(consts: &DerivedConstants, gamma0: f64, horizon: f64) -> f64 {
    truncation_bound_scaled(consts, gamma0, horizon, 1.0)
}

/// Per-path bookkeeping of an objective run.
#[derive(Debug, Clone, Copy, PartialEq)]
struct PathOutcome {
    value: f64,
    gamma_crossed: bool,
    sentinel: bool,
    income_crossings: usize,
    min_gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveRun {
    pub estimate: MCEstimate,
    pub gamma0: f64,
    /// Paths on which `Γ` left the admissible region.
    pub gamma_crossings: usize,
    pub income_crossings: usize,
    pub sentinel_paths: usize,
    /// Index of the first path that hit the `-∞` sentinel.
    pub first_sentinel: Option<usize>,
    /// Smallest `Γ(t)/Γ(0)` over all paths and steps.
    pub min_gamma_ratio: f64,
}

/// Left-Riemann Monte Carlo of `∫_0^T e^{-(ρ+δ)s} u(c(s), B(s)) ds` under the
/// closed-loop feedback policy. Paths that leave the admissible region stop
/// accumulating and are counted; they also make [`estimate_j`] fail.
#[allow(clippy::too_many_arguments)]
pub fn run_objective(
    params: &ModelParams,
    consts: &DerivedConstants,
    w: f64,
    x0: f64,
    past: &[f64],
    horizon: f64,
    config: LoopConfig,
    n_paths: usize,
    seed: u64,
) -> Result<ObjectiveRun> {
    let engine = ClosedLoop::new(params, consts, config)?;
    let steps = step_count(horizon, config.dt)?;
    let start = engine.start(w, x0, past)?;
    let n = consts.n();
    let mut theta0 = vec![0.0; n];
    let first = engine.evaluate(&start, &mut theta0);
    if first.region != Region::Interior {
        return Err(Error::InadmissibleState {
            gamma: first.gamma,
            tol: first.tol,
        });
    }
    let gamma0 = first.gamma;
    let prefs = params.prefs;
    let dt = config.dt;
    let decay = (-(prefs.rho + prefs.delta) * dt).exp();
    let sqrt_dt = dt.sqrt();

    let outcomes = map_paths(n_paths, |j| {
        let mut rng = path_rng(seed, j);
        let mut dz = vec![0.0; n];
        let mut theta = theta0.clone();
        let mut state = start.clone();
        let mut point = first;
        let mut discount = 1.0;
        let mut acc = 0.0;
        let mut out = PathOutcome {
            value: 0.0,
            gamma_crossed: false,
            sentinel: false,
            income_crossings: 0,
            min_gamma: gamma0,
        };
        for _ in 0..steps {
            match utility_rate(point.c, point.bequest, &prefs) {
                Ok(Utility::Finite(u)) => acc += discount * u * dt,
                Ok(Utility::NegInfinity) => {
                    out.sentinel = true;
                    break;
                }
                Err(_) => {
                    out.gamma_crossed = true;
                    break;
                }
            }
            fill_increments(&mut rng, sqrt_dt, &mut dz);
            if engine
                .advance(&mut state, &point, &theta, &dz)
                .income_crossed
            {
                out.income_crossings += 1;
            }
            point = engine.evaluate(&state, &mut theta);
            out.min_gamma = out.min_gamma.min(point.gamma);
            if point.region == Region::Inadmissible {
                out.gamma_crossed = true;
                break;
            }
            discount *= decay;
        }
        out.value = acc;
        out
    });

    let values: Vec<f64> = outcomes.iter().map(|o| o.value).collect();
    let bound = truncation_bound_scaled(consts, gamma0, horizon, config.consumption_scale);
    Ok(ObjectiveRun {
        estimate: MCEstimate::from_samples(&values, bound, horizon),
        gamma0,
        gamma_crossings: outcomes.iter().filter(|o| o.gamma_crossed).count(),
        income_crossings: outcomes.iter().map(|o| o.income_crossings).sum(),
        sentinel_paths: outcomes.iter().filter(|o| o.sentinel).count(),
        first_sentinel: outcomes.iter().position(|o| o.sentinel),
        min_gamma_ratio: outcomes
            .iter()
            .map(|o| o.min_gamma)
            .fold(f64::INFINITY, f64::min)
            / gamma0,
    })
}

/// Monte Carlo objective with the error contract: any `-∞` utility is
/// `SentinelEncountered`, any inadmissible path is `InadmissibleState`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_j(
    params: &ModelParams,
    consts: &DerivedConstants,
    w: f64,
    x0: f64,
    past: &[f64],
    horizon: f64,
    config: LoopConfig,
    n_paths: usize,
    seed: u64,
) -> Result<MCEstimate> {
    let run = run_objective(params, consts, w, x0, past, horizon, config, n_paths, seed)?;
    if let Some(path) = run.first_sentinel {
        return Err(Error::SentinelEncountered { path });
    }
    if run.gamma_crossings > 0 {
        return Err(Error::InadmissibleState {
            gamma: run.min_gamma_ratio * run.gamma0,
            tol: 0.0,
        });
    }
    Ok(run.estimate)
}
