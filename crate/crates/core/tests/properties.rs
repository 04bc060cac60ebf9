use merton_delay::income::{IncomeModel, IncomeState};
use merton_delay::params::{compute_beta_infinity, compute_kappa};
use merton_delay::policy::feedback;
use merton_delay::valuation::gamma_total;
use merton_delay::{
    validate, value_function, DerivedConstants, IncomeParams, Kernel, MarketParams, ModelParams,
    Preferences, ValidationConfig,
};
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

prop_compose! {
    fn market()(r in 0.0..0.05, k1 in -0.5..0.5, k2 in -0.5..0.5,
                s11 in 0.1..0.5, s22 in 0.1..0.5, s12 in -0.05..0.05, s21 in -0.05..0.05) -> (MarketParams, [f64; 2]) {
        let sigma = vec![vec![s11, s12], vec![s21, s22]];
        let mu = vec![r + s11 * k1 + s12 * k2, r + s21 * k1 + s22 * k2];
        (MarketParams::new(r, mu, sigma).unwrap(), [k1, k2])
    }
}

prop_compose! {
    fn sampled_kernel()(values in prop::collection::vec(-0.05..0.05f64, 21)) -> Kernel {
        Kernel::Sampled { values }
    }
}

prop_compose! {
    /// Valid one-asset models around the desk scenario.
    fn model()(gamma in prop_oneof![0.2..0.9f64, 1.2..5.0f64], phi in 0.0..0.012f64, sigma_y in 0.0..0.2f64,
               delta in 0.005..0.03f64, k in 0.5..2.0f64) -> ModelParams {
        ModelParams {
            market: MarketParams::scalar(0.02, 0.06, 0.2),
            prefs: Preferences { rho: 0.03, gamma, k, delta },
            income: IncomeParams::new(0.01, vec![sigma_y], 2.0, 20, Kernel::Constant { value: phi }).unwrap(),
        }
    }
}

prop_compose! {
    fn state()(x0 in 0.0..5.0f64, past in prop::collection::vec(0.0..5.0f64, 20)) -> (f64, Vec<f64>) {
        (x0, past)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn kappa_round_trips((m, k) in market()) {
        let kappa = compute_kappa(&m).unwrap();
        prop_assert!((kappa[0] - k[0]).abs() <= 1e-12 * (1.0 + k[0].abs()));
        prop_assert!((kappa[1] - k[1]).abs() <= 1e-12 * (1.0 + k[1].abs()));
    }

    #[test]
    fn absolute_mass_dominates(kernel in sampled_kernel(), a in 0.0..0.1f64) {
        let income = IncomeParams::new(0.01, vec![0.1], 2.0, 20, kernel.clone()).unwrap();
        let (b, bar) = compute_beta_infinity(&income, a, 0.0);
        prop_assert!(bar >= b);
        if kernel.is_nonnegative() {
            prop_assert_eq!(bar, b);
        }
    }

    #[test]
    fn derived_constants_are_positive_and_consistent(p in model()) {
        prop_assume!(validate(&p, &ValidationConfig::default()).is_ok());
        let c = DerivedConstants::new(&p).unwrap();
        prop_assert!(c.g_inf > 0.0 && c.f_inf > 0.0 && c.nu > 0.0);
        // drift of optimal total wealth from its two expressions
        let kk = c.kappa.dot(&c.kappa);
        let from_f = c.discount_rate + kk / c.gamma - (1.0 + c.delta * c.bequest_factor) / c.f_inf;
        let from_nu = p.market.r + p.prefs.delta + kk / p.prefs.gamma - 1.0 / c.nu;
        prop_assert!(rel(from_f, c.gamma_star_drift) <= 1e-12);
        prop_assert!(rel(from_nu, c.gamma_star_drift) <= 1e-12);
        // pure function of its inputs
        prop_assert_eq!(format!("{:?}", DerivedConstants::new(&p).unwrap()), format!("{c:?}"));
    }

    #[test]
    fn value_feedback_and_total_wealth_are_homogeneous(p in model(), (x0, past) in state(), u in 0.0..1.0f64, a in 0.1..10.0f64) {
        prop_assume!(validate(&p, &ValidationConfig::default()).is_ok());
        let c = DerivedConstants::new(&p).unwrap();
        let s = IncomeState::new(x0, &past, p.income.grid, 1).unwrap();
        let hc = merton_delay::human_capital(&s, &c).unwrap();
        prop_assume!(hc > 1e-3);
        let w = -0.9 * hc + 3.0 * u * hc;
        let g = gamma_total(w, &s, &c).unwrap().value;
        let g2 = gamma_total(a * w, &s.scaled(a), &c).unwrap().value;
        prop_assert!(rel(g2, a * g) <= 1e-12);
        let v = value_function(w, &s, &c).unwrap().to_f64();
        let v2 = value_function(a * w, &s.scaled(a), &c).unwrap().to_f64();
        prop_assert!(rel(v2, a.powf(1.0 - p.prefs.gamma) * v) <= 1e-12);
        let f = feedback(w, &s, &c).unwrap();
        let f2 = feedback(a * w, &s.scaled(a), &c).unwrap();
        prop_assert!(rel(f2.c, a * f.c) <= 1e-12);
        prop_assert!(rel(f2.bequest, a * f.bequest) <= 1e-12);
        prop_assert!(rel(f2.theta[0], a * f.theta[0]) <= 1e-12);
    }

    #[test]
    fn feedback_controls_are_nonnegative(p in model(), (x0, past) in state(), u in 0.0..1.0f64) {
        prop_assume!(validate(&p, &ValidationConfig::default()).is_ok());
        let c = DerivedConstants::new(&p).unwrap();
        let s = IncomeState::new(x0, &past, p.income.grid, 1).unwrap();
        let hc = merton_delay::human_capital(&s, &c).unwrap();
        let f = feedback(-hc + u * 10.0, &s, &c).unwrap();
        prop_assert!(f.c >= 0.0 && f.bequest >= 0.0);
    }

    #[test]
    fn buffer_endpoint_is_current_income(p in model(), (x0, past) in state(), p_sub in 1usize..4, steps in 1usize..200, seed in any::<u64>()) {
        let ds = p.income.grid.ds();
        let model = IncomeModel::new(&p.income, ds / p_sub as f64).unwrap();
        let mut s = model.initial_state(p.income.grid, x0, &past).unwrap();
        let mut rng = merton_delay::rng::path_rng(seed, 0);
        let mut dz = [0.0];
        for _ in 0..steps {
            merton_delay::rng::fill_increments(&mut rng, model.dt.sqrt(), &mut dz);
            model.advance(&mut s, &dz);
            prop_assert_eq!(*s.history().last().unwrap(), s.y);
            prop_assert_eq!(s.history().len(), p.income.grid.len());
        }
    }
}
