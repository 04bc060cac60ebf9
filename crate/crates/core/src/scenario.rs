//! Serializable scenario description and the reference scenarios.

use serde::{Deserialize, Serialize};

use crate::constants::DerivedConstants;
use crate::error::{Error, Result};
use crate::income::IncomeState;
use crate::kernel::Kernel;
use crate::params::{IncomeParams, MarketParams, ModelParams, Preferences};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSpec {
    pub r: f64,
    pub mu: Vec<f64>,
    /// Rows of the volatility matrix.
    pub sigma: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncomeSpec {
    pub mu_y: f64,
    pub sigma_y: Vec<f64>,
    pub d: f64,
    pub m: usize,
    pub kernel: Kernel,
}

/// Income before time 0: one level, or one value per delay-grid node
/// `s_0 = -d, …, s_{m-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Past {
    Level(f64),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub w: f64,
    pub x0: f64,
    pub past: Past,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub market: MarketSpec,
    pub prefs: Preferences,
    pub income: IncomeSpec,
    pub initial: InitialState,
    #[serde(default, skip_serializing_if = "RunSettings::is_empty")]
    pub run: RunSettings,
}

/// Run controls a scenario file may carry; unset fields fall back to the
/// caller's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub n_paths: Option<usize>,
    pub out_dir: Option<String>,
}

impl RunSettings {
    pub fn is_empty(&self) -> bool {
        *self == RunSettings::default()
    }
}

impl Scenario {
    pub fn params(&self) -> Result<ModelParams> {
        let market = MarketParams::new(
            self.market.r,
            self.market.mu.clone(),
            self.market.sigma.clone(),
        )?;
        let income = IncomeParams::new(
            self.income.mu_y,
            self.income.sigma_y.clone(),
            self.income.d,
            self.income.m,
            self.income.kernel.clone(),
        )?;
        Ok(ModelParams {
            market,
            prefs: self.prefs,
            income,
        })
    }

    /// Past income at the `m` delay-grid nodes before 0.
    pub fn past(&self) -> Result<Vec<f64>> {
        let m = self.income.m;
        match &self.initial.past {
            Past::Level(v) => Ok(vec![*v; m]),
            Past::Values(v) if v.len() == m => Ok(v.clone()),
            Past::Values(v) => Err(Error::DimensionMismatch {
                what: "past income",
                expected: m,
                actual: v.len(),
            }),
        }
    }

    /// Initial income state at refinement `p` (`dt = ds/p`).
    pub fn income_state(&self, params: &ModelParams, p: usize) -> Result<IncomeState> {
        IncomeState::new(self.initial.x0, &self.past()?, params.income.grid, p)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.prefs.gamma = gamma;
        self
    }

    pub fn with_kernel(mut self, kernel: Kernel) -> Self {
        self.income.kernel = kernel;
        self
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    /// One risky asset, constant kernel `phi` on `[-2, 0]`, starting from
    /// `w = 1`, `x₀ = 1`, `x₁ ≡ 1`.
    pub fn desk_with_phi(gamma: f64, phi: f64) -> Self {
        Scenario {
            name: format!("desk-gamma{gamma}-phi{phi}"),
            market: MarketSpec {
                r: 0.02,
                mu: vec![0.06],
                sigma: vec![vec![0.2]],
            },
            prefs: Preferences {
                rho: 0.03,
                gamma,
                k: 1.0,
                delta: 0.01,
            },
            income: IncomeSpec {
                mu_y: 0.01,
                sigma_y: vec![0.1],
                d: 2.0,
                m: 50,
                kernel: Kernel::Constant { value: phi },
            },
            initial: InitialState {
                w: 1.0,
                x0: 1.0,
                past: Past::Level(1.0),
            },
            run: RunSettings::default(),
        }
    }

    /// The reference scenario used by the acceptance suite. With a delay
    /// kernel of 0.05 the same market has `β - β̄∞ < 0`, so the kernel is
    /// lowered to 0.01, the largest round value that keeps a clear margin.
    pub fn desk(gamma: f64) -> Self {
        Self::desk_with_phi(gamma, DESK_PHI).with_name(&format!("desk-gamma{gamma}"))
    }

    /// `φ ≡ 0`, `σ_y = 0`, no risk premium: every hypothesis holds.
    pub fn baseline() -> Self {
        Scenario {
            name: "baseline".into(),
            market: MarketSpec {
                r: 0.02,
                mu: vec![0.02],
                sigma: vec![vec![1.0]],
            },
            prefs: Preferences {
                rho: 0.03,
                gamma: 0.5,
                k: 1.0,
                delta: 0.01,
            },
            income: IncomeSpec {
                mu_y: 0.01,
                sigma_y: vec![0.0],
                d: 2.0,
                m: 50,
                kernel: Kernel::Zero,
            },
            initial: InitialState {
                w: 1.0,
                x0: 1.0,
                past: Past::Level(1.0),
            },
            run: RunSettings::default(),
        }
    }

    /// `β = 0` while `β̄∞ ≈ 0.097`.
    pub fn delay_dominated() -> Self {
        let mut s = Self::baseline()
            .with_kernel(Kernel::Constant { value: 0.05 })
            .with_name("delay-dominated");
        s.income.mu_y = 0.03;
        s
    }

    /// Patience too low for the risk premium: the ν denominator is negative.
    pub fn impatient() -> Self {
        let mut s = Self::baseline().with_name("impatient");
        s.prefs.rho = 0.001;
        s.market.mu = vec![0.1];
        s.market.sigma = vec![vec![0.2]];
        s
    }
}

/// Constant delay kernel of [`Scenario::desk`].
pub const DESK_PHI: f64 = 0.01;

/// Scenario, parameters, constants and initial state resolved together.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub scenario: Scenario,
    pub params: ModelParams,
    pub consts: DerivedConstants,
    pub past: Vec<f64>,
}

impl Resolved {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let params = scenario.params()?;
        let consts = DerivedConstants::new(&params)?;
        let past = scenario.past()?;
        Ok(Self {
            scenario: scenario.clone(),
            params,
            consts,
            past,
        })
    }

    pub fn w(&self) -> f64 {
        self.scenario.initial.w
    }

    pub fn x0(&self) -> f64 {
        self.scenario.initial.x0
    }

    pub fn state(&self, p: usize) -> Result<IncomeState> {
        IncomeState::new(self.x0(), &self.past, self.params.income.grid, p)
    }
}
