//! One PASS/FAIL line per acceptance criterion on the reference desk
//! scenario, at the desk-scale run controls. Exits nonzero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use merton_delay::{all_passed, run_suite, Scenario, SuiteConfig};

fn main() -> ExitCode {
    let base = Scenario::desk(0.5);
    let cfg = SuiteConfig::default();
    println!(
        "acceptance: scenario {} (gammas 0.5 and 2), dt={}, T={}, paths={}, seed={}",
        base.name, cfg.dt, cfg.horizon, cfg.n_paths, cfg.seed
    );
    let clock = Instant::now();
    let checks = run_suite(&base, &cfg, |c| println!("{c}"));
    for m in checks
        .iter()
        .flat_map(|c| &c.metrics)
        .filter(|m| m.label.ends_with(".seconds"))
    {
        println!("acceptance: {} = {:.1}", m.label, m.value);
    }
    let passed = checks.iter().filter(|c| c.passed).count();
    println!(
        "acceptance: {passed}/{} passed in {:.1}s",
        checks.len(),
        clock.elapsed().as_secs_f64()
    );
    if all_passed(&checks) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
