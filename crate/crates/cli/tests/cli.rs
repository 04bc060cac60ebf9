use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_merton-delay"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_prints_the_derived_constants() {
    let dir = TempDir::new().unwrap();
    let o = run(
        &["validate", scenario("baseline.toml").to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    for name in ["kappa_1", "beta ", "g_inf", "f_inf", "nu"] {
        assert!(text.contains(name), "missing {name} in\n{text}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(
        manifest["constants"]["g_inf"].as_f64().unwrap().round(),
        50.0
    );
}

#[test]
fn delay_dominated_scenario_is_rejected_with_the_failed_condition() {
    let dir = TempDir::new().unwrap();
    for args in [
        vec!["validate", "--preset", "delay-dominated"],
        vec!["validate", scenario("desk_literal.toml").to_str().unwrap()],
    ] {
        let o = run(&args, dir.path());
        assert_eq!(o.status.code(), Some(3));
        assert!(stderr(&o).contains("HypothesisI_Violated"));
        assert!(stderr(&o).contains("β − β̄∞ > 0"));
    }
    let manifest = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(manifest.contains("HypothesisI_Violated"));
}

#[test]
fn impatient_scenario_fails_the_second_hypothesis() {
    let dir = TempDir::new().unwrap();
    let o = run(
        &["validate", scenario("impatient.toml").to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("HypothesisII_Violated"));
}

#[test]
fn simulation_commands_stop_on_invalid_scenarios() {
    let dir = TempDir::new().unwrap();
    let o = run(
        &["value-check", "--preset", "impatient", "--paths", "10"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    let manifest = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(manifest.contains("HypothesisII_Violated"));
}

#[test]
fn malformed_configuration_exits_with_code_two() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "name = \"x\"\n[market]\nr = 0.02\nsurprise = 1\n").unwrap();
    let o = run(&["validate", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));

    let o = run(
        &[
            "validate",
            dir.path().join("missing.toml").to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["simulate-income", "--dt", "-1"], dir.path());
    assert_eq!(o.status.code(), Some(2));

    let mut s: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(scenario("two_assets.json")).unwrap()).unwrap();
    s["initial"]["past"] = serde_json::json!([1.0, 2.0]);
    let short = dir.path().join("short.json");
    fs::write(&short, s.to_string()).unwrap();
    let o = run(&["validate", short.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn repeated_runs_write_identical_files() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = [
        "policy-sim",
        "--paths",
        "200",
        "--horizon",
        "2",
        "--seed",
        "11",
    ];
    for dir in [&a, &b] {
        let o = run(&args, dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for name in [
        "policy-sim.csv",
        "policy_fan.csv",
        "policy_paths.csv",
        "policy-sim.json",
    ] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
    let strip = |p: &Path| {
        fs::read_to_string(p.join("manifest.json"))
            .unwrap()
            .replace(p.to_str().unwrap(), "OUT")
    };
    assert_eq!(strip(a.path()), strip(b.path()));
}

#[test]
fn file_run_settings_apply_and_flags_override_them() {
    let dir = TempDir::new().unwrap();
    let file = scenario("baseline.toml");
    let o = run(
        &[
            "simulate-income",
            file.to_str().unwrap(),
            "--horizon",
            "1",
            "--format",
            "json",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["controls"]["seed"], 7);
    assert_eq!(manifest["controls"]["n_paths"], 2000);
    let o = run(
        &[
            "simulate-income",
            file.to_str().unwrap(),
            "--horizon",
            "1",
            "--paths",
            "30",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["controls"]["n_paths"], 30);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("simulate-income.json")).unwrap())
            .unwrap();
    assert_eq!(report["table"]["rows"][0][0], "30");
}

#[test]
fn income_fan_has_a_header_and_quantiles() {
    let dir = TempDir::new().unwrap();
    let o = run(
        &[
            "simulate-income",
            "--paths",
            "50",
            "--horizon",
            "1",
            "--format",
            "csv",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let fan = fs::read_to_string(dir.path().join("income_fan.csv")).unwrap();
    assert_eq!(fan.lines().next().unwrap(), "t,mean,p05,p25,p50,p75,p95");
    assert_eq!(fan.lines().count(), 1 + 251);
    assert!(stdout(&o).starts_with("n_paths,dt,horizon"));
}

#[test]
fn benchmark_and_human_capital_pass_on_the_desk() {
    let dir = TempDir::new().unwrap();
    let o = run(&["benchmark"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let o = run(&["human-capital", "--paths", "1000"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("49.5238509"));
}

#[test]
fn value_check_covers_the_closed_form_for_gamma_above_one() {
    let dir = TempDir::new().unwrap();
    let o = run(
        &[
            "value-check",
            scenario("desk_high.toml").to_str().unwrap(),
            "--paths",
            "1000",
            "--dt",
            "0.02",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let table = fs::read_to_string(dir.path().join("value-check.csv")).unwrap();
    assert!(table.lines().nth(1).unwrap().starts_with("2,1,-12.619"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_merton-delay"))
        .arg("frobnicate")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn human_capital_reads_an_income_history_file() {
    let dir = TempDir::new().unwrap();
    let history = dir.path().join("history.csv");
    let mut text = String::from("y\n");
    for _ in 0..51 {
        text.push_str("2.0\n");
    }
    fs::write(&history, &text).unwrap();
    let o = run(
        &[
            "human-capital",
            "--history",
            history.to_str().unwrap(),
            "--paths",
            "500",
            "--format",
            "csv",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    // twice the unit history doubles the closed form
    let row = stdout(&o).lines().nth(1).unwrap().to_string();
    let closed: f64 = row.split(',').next().unwrap().parse().unwrap();
    assert!((closed - 2.0 * 49.523850917249206).abs() < 1e-9, "{row}");

    fs::write(&history, "1\n2\n3\n").unwrap();
    let o = run(
        &[
            "human-capital",
            "--history",
            history.to_str().unwrap(),
            "--paths",
            "10",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn income_dump_can_carry_the_increments() {
    let dir = TempDir::new().unwrap();
    let o = run(
        &[
            "simulate-income",
            scenario("two_assets.json").to_str().unwrap(),
            "--paths",
            "3",
            "--horizon",
            "0.2",
            "--with-increments",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dump = fs::read_to_string(dir.path().join("income_paths.csv")).unwrap();
    let mut lines = dump.lines();
    assert_eq!(lines.next().unwrap(), "path,t,y,dz_1,dz_2");
    assert_eq!(dump.lines().count(), 1 + 3 * 51);
    assert!(dump.lines().nth(51).unwrap().ends_with(",,"));
}
