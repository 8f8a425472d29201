use std::path::Path;
use std::process::{Command, Output};

use reig_core::models::{DiagnosticTestModel, TestKind};
use reig_core::oracle::discrete_eig_exact;
use reig_lab::record::{read_records, EstimateRecord};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reig-lab")).args(args).env_remove("REIG_LAB_SEED").output().unwrap()
}

fn records(out: &Output) -> Vec<EstimateRecord> {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    read_records(out.stdout.as_slice()).unwrap()
}

#[test]
fn diagnostic_nmc_matches_closed_form() {
    let out = lab(&["run", "--model", "diagnostic", "--estimator", "nmc", "--no-timing"]);
    let rows = records(&out);
    assert_eq!(rows.len(), 2);
    let m = DiagnosticTestModel::default();
    for r in rows {
        let test = if r.design == "A" { TestKind::A } else { TestKind::B };
        assert!((r.value - discrete_eig_exact(&m, test, 0.5)).abs() < 1e-12, "{r:?}");
    }
}

#[test]
fn worker_count_does_not_change_output() {
    let args = |w: &'static str| {
        ["run", "--model", "pk", "--estimator", "nmc", "--n1", "40", "--n2", "3", "--m", "20", "--seed", "1,2", "--designs", "0.05,24"]
            .into_iter()
            .chain(["--robust-mode", "reig", "--epsilon", "0,0.1", "--no-timing", "--workers", w])
            .collect::<Vec<_>>()
    };
    let one = lab(&args("1"));
    let eight = lab(&args("8"));
    assert!(one.status.success(), "{}", String::from_utf8_lossy(&one.stderr));
    assert_eq!(one.stdout, eight.stdout);
    assert_eq!(records(&one).len(), 2 * 2 * 2);
}

#[test]
fn csv_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    let out = lab(&["run", "--model", "ab", "--n1", "30", "--m", "10", "--designs", "5", "--out", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read(&path).unwrap();
    let rows = read_records(text.as_slice()).unwrap();
    let mut again = Vec::new();
    reig_lab::record::write_records(&mut again, &rows).unwrap();
    assert_eq!(text, again);
    assert_eq!(rows[0].n1, 30);
}

#[test]
fn robust_estimate_is_monotone_in_epsilon() {
    let out = lab(&[
        "run", "--model", "preference", "--estimator", "exact", "--robust-mode", "reig", "--n1", "200",
        "--epsilon", "0,0.001,0.01,0.1,1", "--designs", "0,16", "--no-timing",
    ]);
    let rows = records(&out);
    for design in ["0", "16"] {
        let values: Vec<f64> = rows.iter().filter(|r| r.design == design).map(|r| r.value).collect();
        assert_eq!(values.len(), 5);
        assert!(values.windows(2).all(|w| w[1] <= w[0]), "{values:?}");
    }
    let max = lab(&[
        "run", "--model", "preference", "--estimator", "exact", "--robust-mode", "reig_max", "--n1", "200",
        "--epsilon", "0,0.01,0.1", "--designs", "0", "--no-timing",
    ]);
    let values: Vec<f64> = records(&max).iter().map(|r| r.value).collect();
    assert!(values.windows(2).all(|w| w[1] >= w[0]), "{values:?}");
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    std::fs::write(&path, r#"{"model": "diagnostic", "estimator": "nmc", "seeds": [3], "epsilon": [0.5]}"#).unwrap();
    let rows = records(&lab(&["run", "--config", path.to_str().unwrap(), "--designs", "B", "--no-timing"]));
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].seed, rows[0].design.as_str(), rows[0].epsilon), (3, "B", 0.5));
    let rows = records(&lab(&["run", "--config", path.to_str().unwrap(), "--seed", "9", "--no-timing"]));
    assert!(rows.iter().all(|r| r.seed == 9));
}

#[test]
fn seed_comes_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_reig-lab"))
        .args(["run", "--model", "diagnostic", "--designs", "A"])
        .env("REIG_LAB_SEED", "17")
        .output()
        .unwrap();
    assert_eq!(records(&out)[0].seed, 17);
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_json = dir.path().join("bad.json");
    std::fs::write(&bad_json, r#"{"model": "ab", "n1": 0}"#).unwrap();
    let unknown = dir.path().join("unknown.json");
    std::fs::write(&unknown, r#"{"model": "ab", "colour": "red"}"#).unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["run", "--config", bad_json.to_str().unwrap()],
        vec!["run", "--config", unknown.to_str().unwrap()],
        vec!["run", "--config", "/nonexistent/run.json"],
        vec!["run", "--model", "ab", "--epsilon", "-1"],
        vec!["run", "--model", "ab", "--designs", "nope"],
        vec!["run", "--model", "pk", "--estimator", "vnmc", "--proposal", "exact"],
        vec!["run", "--model", "wobble"],
        vec!["oracle-report", "--models", ""],
    ];
    for args in cases {
        let out = lab(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn oracle_report_passes() {
    let out = lab(&["oracle-report"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("check,kind,value,reference,tolerance,pass\n"));
    // a tolerance nobody can meet fails the duality row and the exit status
    let strict = lab(&["oracle-report", "--models", "diagnostic", "--duality-tolerance", "0"]);
    assert_eq!(strict.status.code(), Some(1));
}

#[test]
fn figure_fig1_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fig1.csv");
    let out = lab(&["figure", "fig1", "--fast", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(Path::new(&path)).unwrap();
    assert_eq!(text.lines().next(), Some("figure,panel,series,x,y"));
    assert_eq!(text.lines().count(), 1 + 2 * 101);
}
