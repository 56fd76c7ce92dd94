use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kp_rankone::triple::random_admissible;
use kp_rankone_cli::scenario::{general_scenario, MatrixPayload, Scenario, ScenarioKind, ScenarioOptions};
use num_complex::Complex64;
use proptest::prelude::*;
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kp-rankone"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str], scenario: &Path, out: &Path) -> Output {
    bin()
        .args(&args[..1])
        .arg(scenario)
        .args(&args[1..])
        .arg("--out")
        .arg(out)
        .env_remove("KP_RANKONE_TOL")
        .output()
        .expect("binary runs")
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Numeric rows of a grid CSV with the header dropped; empty cells are `None`.
fn csv_rows(path: PathBuf) -> Vec<Vec<Option<f64>>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            l.split(',')
                .map(|f| match f {
                    "" => None,
                    "true" => Some(1.0),
                    "false" => Some(0.0),
                    x => Some(x.parse().unwrap()),
                })
                .collect()
        })
        .collect()
}

fn admissible_scenario(dir: &Path) -> PathBuf {
    let tr = random_admissible(2, 4, 11).unwrap();
    let path = dir.join("general.json");
    fs::write(&path, general_scenario(&tr).to_json()).unwrap();
    path
}

#[test]
fn fixtures_round_trip() {
    for name in ["wilson_n1.json", "kdv_soliton.json", "general_minimal.json", "cm_rank_two.json"] {
        let s = Scenario::parse(&fs::read_to_string(fixture(name)).unwrap()).unwrap();
        assert_eq!(Scenario::parse(&s.to_json()).unwrap(), s, "{name}");
    }
}

fn complex() -> impl Strategy<Value = Complex64> {
    (-1e6..1e6f64, -1e6..1e6f64).prop_map(|(a, b)| Complex64::new(a, b))
}

proptest! {
    #[test]
    fn scenario_round_trip(
        rows in 1usize..4,
        cols in 1usize..4,
        seed in proptest::option::of(any::<u64>()),
        tol in proptest::option::of(1e-300..1.0f64),
        times in proptest::collection::vec(complex(), 0..5),
        entries in proptest::collection::vec(complex(), 16),
    ) {
        let payload = MatrixPayload {
            rows,
            cols,
            entries: (0..rows).map(|i| entries[i * cols..(i + 1) * cols].to_vec()).collect(),
        };
        let s = Scenario {
            kind: ScenarioKind::General,
            matrices: [("A".to_string(), payload)].into_iter().collect(),
            times,
            options: ScenarioOptions { seed, tolerance: tol, ..Default::default() },
        };
        prop_assert_eq!(Scenario::parse(&s.to_json()).unwrap(), s);
    }
}

#[test]
fn minimal_general_scenario_validates() {
    let dir = TempDir::new().unwrap();
    let out = run(&["validate"], &fixture("general_minimal.json"), dir.path());
    assert_eq!(out.status.code(), Some(0));
    let doc = read_json(dir.path().join("validate.json"));
    assert_eq!(doc["pass"], true);
    assert!(doc["reports"][0]["context"]["rank_of_ABUt"].as_u64().unwrap() <= 1);
}

#[test]
fn rank_two_calogero_moser_is_rejected_with_report() {
    let dir = TempDir::new().unwrap();
    let out = run(&["validate"], &fixture("cm_rank_two.json"), dir.path());
    assert_eq!(out.status.code(), Some(1));
    let doc = read_json(dir.path().join("validate.json"));
    assert_eq!(doc["pass"], false);
    assert_eq!(doc["reports"][0]["context"]["rank_of_ABUt"], 2);

    // Other commands refuse to run on it.
    let out = run(&["tau-grid"], &fixture("cm_rank_two.json"), dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rank_of_ABUt"));
}

#[test]
fn wilson_u_grid_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let out = run(&["u-grid", "--t1", "-5:5:201"], &fixture("wilson_n1.json"), dir.path());
    assert_eq!(out.status.code(), Some(0));
    let rows = csv_rows(dir.path().join("u-grid.csv"));
    assert_eq!(rows.len(), 201);
    let mut poles = 0;
    for r in &rows {
        let t1 = r[0].unwrap();
        if r[4] == Some(1.0) {
            poles += 1;
            assert!((t1 + 3.0).abs() < 0.1, "pole flagged at {t1}");
            continue;
        }
        let exact = -2.0 / (t1 + 3.0).powi(2);
        let got = r[1].unwrap();
        assert!((got - exact).abs() <= 1e-6 * exact.abs().max(1.0), "t1 = {t1}: {got} vs {exact}");
        assert!(r[2].unwrap().abs() < 1e-12);
    }
    assert_eq!(poles, 1);
}

#[test]
fn kdv_soliton_tau_grid() {
    let dir = TempDir::new().unwrap();
    let out = run(&["tau-grid", "--t1", "-2:2:41"], &fixture("kdv_soliton.json"), dir.path());
    assert_eq!(out.status.code(), Some(0));
    for r in csv_rows(dir.path().join("tau-grid.csv")) {
        let t1 = r[0].unwrap();
        let exact = 2.0 * t1.cosh();
        assert!((r[1].unwrap() - exact).abs() < 1e-13 * exact);
    }
}

#[test]
fn hbde_trials_all_pass() {
    let dir = TempDir::new().unwrap();
    let sc = admissible_scenario(dir.path());
    let out = run(&["verify-hbde", "--trials", "50", "--seed", "7"], &sc, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(dir.path().join("verify-hbde.json"));
    let reports = doc["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 50);
    for r in reports {
        assert!(r["residual"].as_f64().unwrap() < 1e-8);
    }
}

#[test]
fn failed_check_exits_one_and_still_writes() {
    let dir = TempDir::new().unwrap();
    let sc = admissible_scenario(dir.path());
    let out = run(&["verify-hbde", "--trials", "3", "--tol", "1e-300"], &sc, dir.path());
    assert_eq!(out.status.code(), Some(1));
    let doc = read_json(dir.path().join("verify-hbde.json"));
    assert_eq!(doc["pass"], false);
    assert_eq!(doc["reports"].as_array().unwrap().len(), 3);
}

#[test]
fn environment_tolerance_applies() {
    let dir = TempDir::new().unwrap();
    let sc = fixture("general_minimal.json");
    let status = bin()
        .args(["verify-kp"])
        .arg(&sc)
        .arg("--out")
        .arg(dir.path())
        .env("KP_RANKONE_TOL", "1e-300")
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(1));
    let doc = read_json(dir.path().join("verify-kp.json"));
    assert_eq!(doc["reports"][0]["tolerance"], 1e-300);

    let status = bin()
        .args(["verify-kp"])
        .arg(&sc)
        .arg("--out")
        .arg(dir.path())
        .env("KP_RANKONE_TOL", "loose")
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(2));
}

#[test]
fn usage_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let out = run(&["no-such-command"], &fixture("wilson_n1.json"), dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["validate"], &dir.path().join("missing.json"), dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["u-grid", "--t1", "0:1"], &fixture("wilson_n1.json"), dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["bethe"], &fixture("general_minimal.json"), dir.path());
    assert_eq!(out.status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\n  \"kind\": \"general\",\n  \"matrices\": {},\n  \"colour\": 1\n}").unwrap();
    let out = run(&["validate"], &bad, dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("colour") && err.contains("line 4"), "{err}");
}

#[test]
fn outputs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let sc = admissible_scenario(dir.path());
    let cases: [&[&str]; 4] = [
        &["verify-hbde", "--trials", "5", "--seed", "3"],
        &["verify-kp", "--trials", "2", "--seed", "3"],
        &["tau-grid", "--t1", "-1:1:5", "--t2", "0:1:3"],
        &["psi-grid", "--t1", "-1:1:4", "--z", "3:6:4"],
    ];
    for args in cases {
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        run(args, &sc, &a);
        run(args, &sc, &b);
        let name = fs::read_dir(&a).unwrap().next().unwrap().unwrap().file_name();
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{args:?}");
        fs::remove_dir_all(&a).unwrap();
        fs::remove_dir_all(&b).unwrap();
    }

    let a = dir.path().join("s1");
    let b = dir.path().join("s2");
    run(&["verify-hbde", "--trials", "2", "--seed", "1"], &sc, &a);
    run(&["verify-hbde", "--trials", "2", "--seed", "2"], &sc, &b);
    assert_ne!(
        fs::read(a.join("verify-hbde.json")).unwrap(),
        fs::read(b.join("verify-hbde.json")).unwrap()
    );
}

#[test]
fn every_check_command_runs_on_wilson() {
    let dir = TempDir::new().unwrap();
    for cmd in ["verify-hbde", "verify-kp", "verify-h3", "bethe", "spectral", "crosscheck"] {
        let out = run(&[cmd], &fixture("wilson_n1.json"), dir.path());
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        let doc = read_json(dir.path().join(format!("{cmd}.json")));
        assert_eq!(doc["command"], cmd);
        assert_eq!(doc["pass"], true);
    }
}
