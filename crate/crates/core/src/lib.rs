//! Infinite-horizon consumption, bequest and portfolio choice when labor
//! income depends on its own recent past.
//!
//! The crate evaluates the explicit optimal policy and value function, and
//! ships the Monte Carlo and quadrature oracles used to check them.

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod constants;
pub mod error;
pub mod estimate;
pub mod income;
pub mod kernel;
pub mod objective;
pub mod params;
pub mod policy;
pub mod quadrature;
pub mod rng;
pub mod scenario;
pub mod suite;
pub mod valuation;

pub use constants::DerivedConstants;
pub use error::{Error, Result};
pub use estimate::MCEstimate;
pub use income::{IncomeModel, IncomePath, IncomeState};
pub use kernel::Kernel;
pub use objective::{
    estimate_j, run_objective, utility_rate, value_function, ObjectiveRun, Utility,
};
pub use params::{
    validate, IncomeParams, MarketParams, ModelParams, Preferences, ValidationConfig,
    ValidationReport, Violation,
};
pub use policy::{
    benchmark_wedges, feedback, gamma_star_exact, simulate_closed_loop, ClosedLoop, JointPath,
    LoopConfig, PolicyDecision, StepReport,
};
pub use quadrature::DelayGrid;
pub use rng::{BrownianPath, SeedRecord};
pub use scenario::{Past, Resolved, RunSettings, Scenario};
pub use suite::{all_passed, run_suite, Check, SuiteConfig};
pub use valuation::{
    gamma_total, human_capital, human_capital_mc_oracle, MemoryQuadrature, Region,
};
