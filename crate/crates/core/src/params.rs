//! Scenario parameters and the standing-hypothesis gate.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::quadrature::DelayGrid;

/// Riskless rate `r`, drifts `μ` and volatility matrix `σ` of `n` risky assets.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketParams {
    pub r: f64,
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

impl MarketParams {
    pub fn new(r: f64, mu: Vec<f64>, sigma_rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = mu.len();
        if n == 0 {
            return Err(Error::InvalidArgument(
                "market needs at least one risky asset".into(),
            ));
        }
        if sigma_rows.len() != n || sigma_rows.iter().any(|row| row.len() != n) {
            return Err(Error::DimensionMismatch {
                what: "sigma",
                expected: n,
                actual: sigma_rows.len(),
            });
        }
        let sigma = DMatrix::from_fn(n, n, |i, j| sigma_rows[i][j]);
        Ok(Self {
            r,
            mu: DVector::from_vec(mu),
            sigma,
        })
    }

    /// One risky asset.
    pub fn scalar(r: f64, mu: f64, sigma: f64) -> Self {
        Self {
            r,
            mu: DVector::from_element(1, mu),
            sigma: DMatrix::from_element(1, 1, sigma),
        }
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn excess_return(&self) -> DVector<f64> {
        self.mu.map(|m| m - self.r)
    }

    pub fn sigma_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n())
            .map(|i| self.sigma.row(i).iter().copied().collect())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preferences {
    /// Subjective discount rate.
    pub rho: f64,
    /// Relative risk aversion.
    pub gamma: f64,
    /// Bequest weight.
    pub k: f64,
    /// Mortality intensity.
    pub delta: f64,
}

impl Preferences {
    /// `b = 1 - 1/γ`.
    pub fn b(&self) -> f64 {
        1.0 - 1.0 / self.gamma
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncomeParams {
    pub mu_y: f64,
    pub sigma_y: DVector<f64>,
    pub kernel: Kernel,
    pub grid: DelayGrid,
}

impl IncomeParams {
    pub fn new(mu_y: f64, sigma_y: Vec<f64>, d: f64, m: usize, kernel: Kernel) -> Result<Self> {
        let grid = DelayGrid::new(d, m)?;
        kernel.check(&grid)?;
        Ok(Self {
            mu_y,
            sigma_y: DVector::from_vec(sigma_y),
            kernel,
            grid,
        })
    }

    pub fn d(&self) -> f64 {
        self.grid.d
    }

    pub fn m(&self) -> usize {
        self.grid.m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub market: MarketParams,
    pub prefs: Preferences,
    pub income: IncomeParams,
}

impl ModelParams {
    /// Same scenario with the delay kernel switched off.
    pub fn without_delay(&self) -> ModelParams {
        let mut out = self.clone();
        out.income.kernel = Kernel::Zero;
        out
    }

    pub fn with_gamma(&self, gamma: f64) -> ModelParams {
        let mut out = self.clone();
        out.prefs.gamma = gamma;
        out
    }
}

/// Tolerances of the hypothesis gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    /// Strict margin applied to the hypothesis inequalities.
    pub margin: f64,
    /// Largest accepted condition number of `σ`.
    pub max_condition: f64,
    /// `|γ - 1|` below this is treated as log utility and rejected.
    pub gamma_exclusion: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            margin: 1e-10,
            max_condition: 1e12,
            gamma_exclusion: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    SigmaSingular {
        condition: f64,
    },
    GammaExcluded {
        gamma: f64,
    },
    /// `β - β̄∞ ≤ 0`.
    HypothesisIViolated {
        beta: f64,
        beta_bar_inf: f64,
    },
    /// `ρ + δ - (1-γ)(r + δ + κᵀκ/(2γ)) ≤ 0`.
    HypothesisIIViolated {
        denominator: f64,
    },
    NonPositiveParameter {
        name: &'static str,
        value: f64,
    },
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
}

impl Violation {
    /// The condition that failed, spelled as the inequality that must hold.
    pub fn condition(&self) -> &'static str {
        match self {
            Violation::SigmaSingular { .. } => "σ invertible",
            Violation::GammaExcluded { .. } => "γ ∈ (0,1) ∪ (1,∞)",
            Violation::HypothesisIViolated { .. } => "β − β̄∞ > 0",
            Violation::HypothesisIIViolated { .. } => "ρ + δ − (1−γ)(r + δ + κᵀκ/(2γ)) > 0",
            Violation::NonPositiveParameter { .. } => "parameter > 0",
            Violation::DimensionMismatch { .. } => "dimensions agree",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SigmaSingular { condition } => {
                write!(f, "SigmaSingular: {} fails (condition number {condition:e})", self.condition())
            }
            Violation::GammaExcluded { gamma } => {
                write!(f, "GammaExcluded: {} fails (γ = {gamma})", self.condition())
            }
            Violation::HypothesisIViolated { beta, beta_bar_inf } => write!(
                f,
                "HypothesisI_Violated: {} fails (β = {beta:.6}, β̄∞ = {beta_bar_inf:.6}, gap = {:.6})",
                self.condition(),
                beta - beta_bar_inf
            ),
            Violation::HypothesisIIViolated { denominator } => {
                write!(f, "HypothesisII_Violated: {} fails (value {denominator:.6})", self.condition())
            }
            Violation::NonPositiveParameter { name, value } => {
                write!(f, "NonPositiveParameter: {name} > 0 fails ({name} = {value})")
            }
            Violation::DimensionMismatch { what, expected, actual } => {
                write!(f, "DimensionMismatch: {what} has length {actual}, expected {expected}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Ratio of the largest to the smallest singular value.
pub fn condition_number(sigma: &DMatrix<f64>) -> f64 {
    let sv = sigma.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0_f64, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Market price of risk `κ = σ⁻¹(μ - r·1)`.
pub fn compute_kappa(market: &MarketParams) -> Result<DVector<f64>> {
    compute_kappa_with(market, ValidationConfig::default().max_condition)
}

pub(crate) fn compute_kappa_with(
    market: &MarketParams,
    max_condition: f64,
) -> Result<DVector<f64>> {
    let n = market.n();
    if market.sigma.nrows() != n || market.sigma.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "sigma",
            expected: n,
            actual: market.sigma.nrows(),
        });
    }
    let condition = condition_number(&market.sigma);
    if !(condition <= max_condition) {
        return Err(Error::SigmaSingular { condition });
    }
    let excess = market.excess_return();
    market
        .sigma
        .clone()
        .lu()
        .solve(&excess)
        .ok_or(Error::SigmaSingular { condition })
}

/// `(β∞, β̄∞)`: discounted mass of `φ` and of `|φ|` at rate `r + δ`.
pub fn compute_beta_infinity(income: &IncomeParams, r: f64, delta: f64) -> (f64, f64) {
    income.kernel.discounted_mass(r + delta, &income.grid)
}

/// Effective discount rate of labor income, `β = r + δ - μ_y + σ_yᵀκ`.
pub fn compute_beta(income: &IncomeParams, r: f64, delta: f64, kappa: &DVector<f64>) -> f64 {
    r + delta - income.mu_y + income.sigma_y.dot(kappa)
}

/// `g∞ = 1/(β - β∞)` and `h∞` on the delay grid.
pub fn compute_g_h_infinity(
    income: &IncomeParams,
    r: f64,
    delta: f64,
    beta: f64,
    beta_inf: f64,
) -> Result<(f64, Vec<f64>)> {
    let gap = beta - beta_inf;
    if !(gap > 0.0) {
        return Err(Error::DegenerateDiscount { gap });
    }
    let g = 1.0 / gap;
    let h = income
        .kernel
        .memory_profile(r + delta, &income.grid)
        .into_iter()
        .map(|v| g * v)
        .collect();
    Ok((g, h))
}

/// `ρ + δ - (1-γ)(r + δ + κᵀκ/(2γ))`, the denominator of `ν`.
pub fn nu_denominator(prefs: &Preferences, r: f64, kappa_sq: f64) -> f64 {
    let g = prefs.gamma;
    prefs.rho + prefs.delta - (1.0 - g) * (r + prefs.delta + kappa_sq / (2.0 * g))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalGrowth {
    pub nu: f64,
    pub f_inf: f64,
    pub gamma_star_drift: f64,
    pub gamma_star_vol: DVector<f64>,
}

/// `ν`, `f∞ = (1 + δ k^{-b}) ν` and the drift/volatility of optimal total wealth.
pub fn compute_nu_f(prefs: &Preferences, kappa: &DVector<f64>, r: f64) -> Result<OptimalGrowth> {
    let kappa_sq = kappa.dot(kappa);
    let den = nu_denominator(prefs, r, kappa_sq);
    if !(den > 0.0) {
        return Err(Error::Validation(ValidationReport {
            violations: vec![Violation::HypothesisIIViolated { denominator: den }],
        }));
    }
    let nu = prefs.gamma / den;
    let bequest = 1.0 + prefs.delta * prefs.k.powf(-prefs.b());
    let f_inf = bequest * nu;
    let gamma_star_drift = r + prefs.delta + kappa_sq / prefs.gamma - bequest / f_inf;
    Ok(OptimalGrowth {
        nu,
        f_inf,
        gamma_star_drift,
        gamma_star_vol: kappa / prefs.gamma,
    })
}

/// Checks every standing hypothesis and collects all failures.
pub fn validate(
    params: &ModelParams,
    cfg: &ValidationConfig,
) -> std::result::Result<(), ValidationReport> {
    let mut violations = Vec::new();
    let ModelParams {
        market,
        prefs,
        income,
    } = params;

    for (name, value) in [
        ("rho", prefs.rho),
        ("k", prefs.k),
        ("delta", prefs.delta),
        ("gamma", prefs.gamma),
        ("d", income.d()),
    ] {
        if !(value > 0.0) || !value.is_finite() {
            violations.push(Violation::NonPositiveParameter { name, value });
        }
    }
    if prefs.gamma > 0.0 && (prefs.gamma - 1.0).abs() < cfg.gamma_exclusion {
        violations.push(Violation::GammaExcluded { gamma: prefs.gamma });
    }
    if income.sigma_y.len() != market.n() {
        violations.push(Violation::DimensionMismatch {
            what: "sigma_y",
            expected: market.n(),
            actual: income.sigma_y.len(),
        });
    }

    let kappa = match compute_kappa_with(market, cfg.max_condition) {
        Ok(k) => Some(k),
        Err(Error::SigmaSingular { condition }) => {
            violations.push(Violation::SigmaSingular { condition });
            None
        }
        Err(Error::DimensionMismatch {
            what,
            expected,
            actual,
        }) => {
            violations.push(Violation::DimensionMismatch {
                what,
                expected,
                actual,
            });
            None
        }
        Err(_) => None,
    };

    if let Some(kappa) = kappa.filter(|_| income.sigma_y.len() == market.n()) {
        let beta = compute_beta(income, market.r, prefs.delta, &kappa);
        let (_, beta_bar_inf) = compute_beta_infinity(income, market.r, prefs.delta);
        if !(beta - beta_bar_inf > cfg.margin) {
            violations.push(Violation::HypothesisIViolated { beta, beta_bar_inf });
        }
        if prefs.gamma > 0.0 {
            let den = nu_denominator(prefs, market.r, kappa.dot(&kappa));
            if !(den > cfg.margin) {
                violations.push(Violation::HypothesisIIViolated { denominator: den });
            }
        }
    }

    if violations.is_empty() {
        Ok(())
    } else {
        Err(ValidationReport { violations })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn baseline() -> ModelParams {
        ModelParams {
            market: MarketParams::scalar(0.02, 0.02, 1.0),
            prefs: Preferences {
                rho: 0.03,
                gamma: 0.5,
                k: 1.0,
                delta: 0.01,
            },
            income: IncomeParams::new(0.01, vec![0.0], 2.0, 50, Kernel::Zero).unwrap(),
        }
    }

    #[test]
    fn identity_zero_case_is_valid() {
        let p = baseline();
        assert!(validate(&p, &ValidationConfig::default()).is_ok());
        let kappa = compute_kappa(&p.market).unwrap();
        assert_eq!(kappa[0], 0.0);
        assert_relative_eq!(
            compute_beta(&p.income, 0.02, 0.01, &kappa),
            0.02,
            epsilon = 1e-15
        );
    }

    #[test]
    fn gamma_one_is_excluded() {
        let p = baseline().with_gamma(1.0);
        let report = validate(&p, &ValidationConfig::default()).unwrap_err();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::GammaExcluded { .. })));
        let p = baseline().with_gamma(1.0 + 5e-7);
        assert!(validate(&p, &ValidationConfig::default()).is_err());
    }

    #[test]
    fn hypothesis_one_violation_is_reported() {
        let mut p = baseline();
        p.market = MarketParams::scalar(0.02, 0.02, 1.0);
        p.income =
            IncomeParams::new(0.03, vec![0.0], 2.0, 50, Kernel::Constant { value: 0.05 }).unwrap();
        let report = validate(&p, &ValidationConfig::default()).unwrap_err();
        match &report.violations[..] {
            [Violation::HypothesisIViolated { beta, beta_bar_inf }] => {
                assert!(beta.abs() < 1e-15);
                // 0.05 (1 - e^{-0.06}) / 0.03
                assert_relative_eq!(*beta_bar_inf, 0.097_059_110_692_918_8, epsilon = 1e-12);
            }
            other => panic!("unexpected violations {other:?}"),
        }
        assert!(report.to_string().contains("β − β̄∞ > 0"));
    }

    #[test]
    fn hypothesis_two_violation_is_reported() {
        let mut p = baseline();
        p.prefs.rho = 0.001;
        p.market = MarketParams::scalar(0.02, 0.1, 0.2);
        p.income.sigma_y = DVector::from_element(1, 0.0);
        let report = validate(&p, &ValidationConfig::default()).unwrap_err();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::HypothesisIIViolated { .. })));
    }

    #[test]
    fn singular_sigma_and_nonpositive_parameters_are_all_listed() {
        let mut p = baseline();
        p.market = MarketParams::new(0.02, vec![0.05, 0.06], vec![vec![0.2, 0.4], vec![0.1, 0.2]])
            .unwrap();
        p.income.sigma_y = DVector::zeros(2);
        p.prefs.k = 0.0;
        p.prefs.delta = -0.1;
        let report = validate(&p, &ValidationConfig::default()).unwrap_err();
        let names: Vec<_> = report.violations.iter().map(|v| v.condition()).collect();
        assert!(names.contains(&"σ invertible"));
        assert_eq!(names.iter().filter(|c| **c == "parameter > 0").count(), 2);
    }

    #[test]
    fn kappa_examples() {
        let m = MarketParams::scalar(0.02, 0.06, 1.0);
        assert_relative_eq!(compute_kappa(&m).unwrap()[0], 0.04, epsilon = 1e-15);
        let m = MarketParams::new(0.02, vec![0.06, 0.08], vec![vec![0.2, 0.0], vec![0.0, 0.3]])
            .unwrap();
        let k = compute_kappa(&m).unwrap();
        assert_relative_eq!(k[0], 0.2, epsilon = 1e-14);
        assert_relative_eq!(k[1], 0.2, epsilon = 1e-14);
    }

    #[test]
    fn nu_and_f_examples() {
        let prefs = Preferences {
            rho: 0.03,
            gamma: 0.5,
            k: 1.0,
            delta: 0.01,
        };
        let kappa = DVector::from_element(1, 0.2);
        let g = compute_nu_f(&prefs, &kappa, 0.02).unwrap();
        assert_relative_eq!(g.nu, 100.0, max_relative = 1e-12);
        // b = -1, k = 1 → f∞ = (1 + δ) ν
        assert_relative_eq!(g.f_inf, 1.01 * 100.0, max_relative = 1e-12);
        let g0 = compute_nu_f(
            &Preferences {
                delta: 0.0,
                rho: 0.05,
                ..prefs
            },
            &kappa,
            0.02,
        )
        .unwrap();
        assert_eq!(g0.f_inf, g0.nu);
        assert_relative_eq!(g.gamma_star_drift, 0.03 + 0.08 - 0.01, max_relative = 1e-12);
        assert_relative_eq!(g.gamma_star_vol[0], 0.4, epsilon = 1e-15);
    }
}
