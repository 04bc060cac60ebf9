//! Everything the closed-form solution needs, computed once per scenario.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::params::{
    compute_beta, compute_beta_infinity, compute_g_h_infinity, compute_kappa, compute_nu_f,
    validate, ModelParams, ValidationConfig,
};
use crate::quadrature::{trapezoid_weights, DelayGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct DerivedConstants {
    pub kappa: DVector<f64>,
    pub b: f64,
    pub beta: f64,
    pub beta_inf: f64,
    pub beta_bar_inf: f64,
    pub g_inf: f64,
    /// `h∞` at the `m + 1` delay-grid nodes.
    pub h_inf: Vec<f64>,
    pub nu: f64,
    pub f_inf: f64,
    pub gamma_star_drift: f64,
    pub gamma_star_vol: DVector<f64>,

    /// `(σᵀ)⁻¹κ`, the Merton direction per unit of total wealth times `γ`.
    pub merton_direction: DVector<f64>,
    /// `(σᵀ)⁻¹σ_y`, the hedging direction per unit of capitalised income.
    pub hedge_direction: DVector<f64>,
    /// `r + δ`.
    pub discount_rate: f64,
    /// Mortality intensity `δ`.
    pub delta: f64,
    pub gamma: f64,
    /// `k^{-b}`.
    pub bequest_factor: f64,
    pub grid: DelayGrid,
    pub kernel: Kernel,
    pub sigma: DMatrix<f64>,
    pub sigma_y: DVector<f64>,
}

impl DerivedConstants {
    /// Validates the scenario and derives every constant.
    pub fn new(params: &ModelParams) -> Result<Self> {
        Self::with_config(params, &ValidationConfig::default())
    }

    pub fn with_config(params: &ModelParams, cfg: &ValidationConfig) -> Result<Self> {
        validate(params, cfg).map_err(Error::Validation)?;
        Self::unchecked(params)
    }

    /// Derives the constants without the hypothesis gate. Fails only where a
    /// formula is undefined.
    pub fn unchecked(params: &ModelParams) -> Result<Self> {
        let ModelParams {
            market,
            prefs,
            income,
        } = params;
        let kappa = compute_kappa(market)?;
        let r = market.r;
        let beta = compute_beta(income, r, prefs.delta, &kappa);
        let (beta_inf, beta_bar_inf) = compute_beta_infinity(income, r, prefs.delta);
        let (g_inf, h_inf) = compute_g_h_infinity(income, r, prefs.delta, beta, beta_inf)?;
        let growth = compute_nu_f(prefs, &kappa, r)?;

        let sigma_t = market.sigma.transpose();
        let lu = sigma_t.lu();
        let merton_direction = lu.solve(&kappa).ok_or(Error::SigmaSingular {
            condition: f64::INFINITY,
        })?;
        let hedge_direction = lu.solve(&income.sigma_y).ok_or(Error::SigmaSingular {
            condition: f64::INFINITY,
        })?;

        Ok(Self {
            b: prefs.b(),
            beta,
            beta_inf,
            beta_bar_inf,
            g_inf,
            h_inf,
            nu: growth.nu,
            f_inf: growth.f_inf,
            gamma_star_drift: growth.gamma_star_drift,
            gamma_star_vol: growth.gamma_star_vol,
            merton_direction,
            hedge_direction,
            discount_rate: r + prefs.delta,
            delta: prefs.delta,
            gamma: prefs.gamma,
            bequest_factor: prefs.k.powf(-prefs.b()),
            grid: income.grid,
            kernel: income.kernel.clone(),
            sigma: market.sigma.clone(),
            sigma_y: income.sigma_y.clone(),
            kappa,
        })
    }

    pub fn n(&self) -> usize {
        self.kappa.len()
    }

    /// Solves `σᵀx = v`.
    pub fn solve_sigma_t(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.sigma
            .transpose()
            .lu()
            .solve(v)
            .ok_or(Error::SigmaSingular {
                condition: f64::INFINITY,
            })
    }

    /// `h∞(s)` anywhere in `[-d, 0]`.
    pub fn h_at(&self, s: f64) -> f64 {
        self.g_inf * self.kernel.memory_at(self.discount_rate, s, &self.grid)
    }

    /// `h∞(s) = Σ c_k e^{λ_k s}` as `(c_k, λ_k)` pairs, for kernels where that
    /// form exists and is well conditioned.
    pub fn memory_exponentials(&self) -> Option<Vec<(f64, f64)>> {
        let a = self.discount_rate;
        let d = self.grid.d;
        let g = self.g_inf;
        match self.kernel {
            Kernel::Zero => Some(Vec::new()),
            Kernel::Constant { value } if (a * d).abs() > 1e-6 => {
                let c = g * value / a;
                Some(vec![(c, 0.0), (-c * (-a * d).exp(), -a)])
            }
            Kernel::Exponential { scale, rate } if ((a + rate) * d).abs() > 1e-6 => {
                let c = g * scale / (a + rate);
                Some(vec![(c, rate), (-c * (-(a + rate) * d).exp(), -a)])
            }
            _ => None,
        }
    }

    /// Trapezoid weights times `h∞` on the grid refined by `p`, ready for a
    /// dot product with a history buffer sampled at that resolution.
    pub fn weighted_memory(&self, p: usize) -> Vec<f64> {
        let fine = self.grid.refined(p);
        let values: Vec<f64> = match &self.kernel {
            Kernel::Sampled { .. } => {
                // Interpolate the coarse profile; the kernel itself is only
                // known at the coarse nodes.
                let coarse = &self.h_inf;
                (0..fine.len())
                    .map(|i| {
                        let j = i / p;
                        if j >= self.grid.m {
                            coarse[self.grid.m]
                        } else {
                            let frac = (i % p) as f64 / p as f64;
                            coarse[j] * (1.0 - frac) + coarse[j + 1] * frac
                        }
                    })
                    .collect()
            }
            _ => {
                let mut v: Vec<f64> = fine.nodes().into_iter().map(|s| self.h_at(s)).collect();
                v[0] = 0.0;
                v
            }
        };
        values
            .iter()
            .zip(trapezoid_weights(fine.len(), fine.ds()))
            .map(|(h, w)| h * w)
            .collect()
    }

    /// Forward-difference residual of `h' = g∞φ - (r+δ)h` on the grid, as the
    /// largest absolute value over the nodes.
    pub fn memory_ode_residual(&self) -> f64 {
        let ds = self.grid.ds();
        let phi = self.kernel.on_grid(&self.grid);
        let h = &self.h_inf;
        (0..self.grid.m)
            .map(|j| {
                let deriv = (h[j + 1] - h[j]) / ds;
                (deriv - (self.g_inf * phi[j] - self.discount_rate * h[j])).abs()
            })
            .fold(0.0, f64::max)
    }

    /// `|h∞(0) - (β g∞ - 1)|`.
    pub fn memory_endpoint_gap(&self) -> f64 {
        (self.h_inf[self.grid.m] - (self.beta * self.g_inf - 1.0)).abs()
    }

    /// Slowest decay rate `λ < 0` of discounted expected income, the root of
    /// `λ + β = ∫|φ(s)| e^{(r+δ+λ)s} ds`.
    pub fn income_decay_rate(&self) -> f64 {
        let f = |lambda: f64| {
            let (_, abs_mass) = self
                .kernel
                .discounted_mass(self.discount_rate + lambda, &self.grid);
            lambda + self.beta - abs_mass
        };
        // f is increasing, f(0) = β - β̄∞ > 0.
        let mut hi = 0.0;
        let mut lo = -self.beta.abs().max(1e-3);
        while f(lo) > 0.0 {
            lo *= 2.0;
            if lo < -1e6 {
                return lo;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{IncomeParams, MarketParams, Preferences};
    use approx::assert_relative_eq;

    fn scenario(kernel: Kernel, m: usize) -> ModelParams {
        ModelParams {
            market: MarketParams::scalar(0.02, 0.06, 0.2),
            prefs: Preferences {
                rho: 0.03,
                gamma: 0.5,
                k: 1.0,
                delta: 0.01,
            },
            income: IncomeParams::new(0.01, vec![0.1], 2.0, m, kernel).unwrap(),
        }
    }

    #[test]
    fn zero_kernel_capitalises_at_beta() {
        let c = DerivedConstants::new(&scenario(Kernel::Zero, 50)).unwrap();
        assert_relative_eq!(c.beta, 0.04, epsilon = 1e-15);
        assert_eq!(c.g_inf, 1.0 / c.beta);
        assert!(c.h_inf.iter().all(|&h| h == 0.0));
    }

    #[test]
    fn constant_kernel_profile_is_pointwise_exact() {
        let phi = 0.01;
        let c = DerivedConstants::new(&scenario(Kernel::Constant { value: phi }, 50)).unwrap();
        let a = 0.03;
        for (j, s) in c.grid.nodes().into_iter().enumerate() {
            let expected = c.g_inf * phi * (1.0 - (-a * (s + 2.0)).exp()) / a;
            assert_relative_eq!(c.h_inf[j], expected, epsilon = 1e-15, max_relative = 1e-13);
        }
        assert_eq!(c.h_inf[0], 0.0);
        assert!(c.memory_endpoint_gap() <= 1e-10);
    }

    #[test]
    fn residual_shrinks_first_order() {
        let mut prev = None;
        for m in [50, 100, 200, 400] {
            let c = DerivedConstants::new(&scenario(
                Kernel::Exponential {
                    scale: 0.01,
                    rate: 0.5,
                },
                m,
            ))
            .unwrap();
            let res = c.memory_ode_residual();
            if let Some(p) = prev {
                let ratio: f64 = p / res;
                assert!(ratio > 1.8 && ratio < 2.2, "ratio {ratio}");
            }
            prev = Some(res);
        }
    }

    #[test]
    fn exponential_form_reproduces_the_profile() {
        for kernel in [
            Kernel::Constant { value: 0.01 },
            Kernel::Exponential {
                scale: 0.02,
                rate: 0.7,
            },
        ] {
            let c = DerivedConstants::new(&scenario(kernel, 50)).unwrap();
            let terms = c.memory_exponentials().unwrap();
            for (j, s) in c.grid.nodes().into_iter().enumerate() {
                let v: f64 = terms.iter().map(|(k, l)| k * (l * s).exp()).sum();
                assert!((v - c.h_inf[j]).abs() < 1e-12, "{v} vs {}", c.h_inf[j]);
            }
        }
    }

    #[test]
    fn decay_rate_for_zero_kernel_is_minus_beta() {
        let c = DerivedConstants::new(&scenario(Kernel::Zero, 50)).unwrap();
        assert_relative_eq!(c.income_decay_rate(), -c.beta, epsilon = 1e-12);
    }

    #[test]
    fn decay_is_slower_than_discount_gap() {
        let c = DerivedConstants::new(&scenario(Kernel::Constant { value: 0.01 }, 50)).unwrap();
        let lambda = c.income_decay_rate();
        assert!(lambda < 0.0);
        assert!(lambda > -(c.beta - c.beta_inf));
    }

    #[test]
    fn fine_weights_sum_like_coarse_inner_product() {
        let c = DerivedConstants::new(&scenario(Kernel::Constant { value: 0.01 }, 50)).unwrap();
        let coarse: f64 = c
            .h_inf
            .iter()
            .zip(c.grid.trapezoid_weights())
            .map(|(h, w)| h * w)
            .sum();
        let fine: f64 = c.weighted_memory(10).iter().sum();
        assert!((coarse - fine).abs() < 1e-5);
    }
}
