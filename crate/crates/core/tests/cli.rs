//! Exit-code and file contract of the `conserve` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use conserve::io::{read_matrix, RepairReportFile};
use conserve::model::DEFAULT_FEAS_TOL;
use conserve::{diagnostics, ConstraintSet};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn conserve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conserve"))
        .args(args)
        .env_remove("CONSERVE_SEED")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn project_then_check_is_feasible() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a_star.csv");
    let report = dir.path().join("report.json");
    let run = conserve(&[
        "project",
        "--input",
        s(&fixture("a_hat.csv")),
        "--constraints",
        s(&fixture("ones3.csv")),
        "--output",
        s(&out),
        "--report",
        s(&report),
    ]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));

    let (a_star, _) = read_matrix(&out).unwrap();
    let c = ConstraintSet::single(&[1.0; 3]).unwrap();
    assert!(diagnostics::violation(&a_star, &c).unwrap().max_abs <= 1e-10);

    let check = conserve(&[
        "check",
        "--input",
        s(&out),
        "--constraints",
        s(&fixture("ones3.csv")),
    ]);
    assert_eq!(code(&check), 0, "{}", stdout(&check));

    let parsed = RepairReportFile::from_json(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(parsed.correction_rank, 1);
    assert_eq!(parsed.eigenvalues_after.len(), 3);
    assert_eq!(parsed.settings.feas_tol, DEFAULT_FEAS_TOL);
    assert!(parsed.violation_after.max_abs <= 1e-10);
}

#[test]
fn project_keeps_input_format_unless_overridden() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.dat");
    let run = conserve(&[
        "project",
        "--input",
        s(&fixture("a_hat.json")),
        "--constraints",
        s(&fixture("ones3.csv")),
        "--output",
        s(&out),
    ]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    assert!(fs::read_to_string(&out).unwrap().starts_with('{'));

    let run = conserve(&[
        "--format",
        "csv",
        "project",
        "--input",
        s(&fixture("a_hat.json")),
        "--constraints",
        s(&fixture("ones3.csv")),
        "--output",
        s(&out),
    ]);
    assert_eq!(code(&run), 0);
    assert!(fs::read_to_string(&out).unwrap().starts_with("# 3 3"));
}

#[test]
fn perturbed_matrix_fails_check() {
    let run = conserve(&[
        "check",
        "--input",
        s(&fixture("a_hat.csv")),
        "--constraints",
        s(&fixture("ones3.csv")),
    ]);
    assert_eq!(code(&run), 1);
    assert!(stdout(&run).contains("infeasible"));
}

#[test]
fn zero_constraints_are_rank_deficient() {
    let dir = tempfile::tempdir().unwrap();
    let run = conserve(&[
        "project",
        "--input",
        s(&fixture("a_hat.csv")),
        "--constraints",
        s(&fixture("zeros3.csv")),
        "--output",
        s(&dir.path().join("x.csv")),
    ]);
    assert_eq!(code(&run), 3);
    assert!(stderr(&run).contains("constraint matrix is rank deficient"));
}

#[test]
fn malformed_input_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let run = conserve(&[
        "project",
        "--input",
        s(&fixture("malformed.csv")),
        "--constraints",
        s(&fixture("ones3.csv")),
        "--output",
        s(&dir.path().join("x.csv")),
    ]);
    assert_eq!(code(&run), 2);
    assert!(stderr(&run).contains("malformed.csv"));

    let run = conserve(&[
        "check",
        "--input",
        s(&fixture("missing.csv")),
        "--constraints",
        s(&fixture("ones3.csv")),
    ]);
    assert_eq!(code(&run), 2);
}

#[test]
fn affine_rhs_shape_is_checked() {
    let dir = tempfile::tempdir().unwrap();
    let base = |rhs: &str, out: &Path| {
        conserve(&[
            "project",
            "--input",
            s(&fixture("a_hat.csv")),
            "--constraints",
            s(&fixture("ones3.csv")),
            "--output",
            s(out),
            "--affine-rhs",
            s(&fixture(rhs)),
        ])
    };
    let out = dir.path().join("x.csv");
    let run = base("rhs_wrong_shape.csv", &out);
    assert_eq!(code(&run), 2);
    assert!(stderr(&run).contains("rhs_wrong_shape.csv"));

    let run = base("rhs_ok.csv", &out);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let (m, _) = read_matrix(&out).unwrap();
    for s in m.col_sums() {
        assert!((s - 1.0).abs() <= 1e-14);
    }
}

#[test]
fn constraint_dimension_mismatch_is_input_error() {
    let run = conserve(&[
        "check",
        "--input",
        s(&fixture("a_hat.csv")),
        "--constraints",
        s(&fixture("ones2.csv")),
    ]);
    assert_eq!(code(&run), 2);
}

#[test]
fn simulate_conservative_operator() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let run = conserve(&[
        "simulate",
        "--input",
        s(&fixture("a_star.csv")),
        "--constraints",
        s(&fixture("ones3.csv")),
        "--x0",
        "0.7,0.2,0.1",
        "--t-final",
        "10",
        "--dt",
        "0.01",
        "--output",
        s(&out),
    ]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,x_1,x_2,x_3,inv_1");
    assert_eq!(lines.count(), 1001);
    let reported: f64 = stdout(&run)
        .split("max_drift = ")
        .nth(1)
        .and_then(|r| r.split(',').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(reported <= 1e-10);
}

#[test]
fn simulate_discrete_row_count_and_x0_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let run = conserve(&[
        "simulate",
        "--input",
        s(&fixture("a_star.csv")),
        "--constraints",
        s(&fixture("ones3.csv")),
        "--x0",
        s(&fixture("x0.txt")),
        "--mode",
        "discrete",
        "--steps",
        "50",
        "--output",
        s(&out),
    ]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1 + 51);
}

#[test]
fn learned_operator_drifts_more_than_repaired() {
    let dir = tempfile::tempdir().unwrap();
    let drift_of = |input: &str| {
        let run = conserve(&[
            "simulate",
            "--input",
            s(&fixture(input)),
            "--constraints",
            s(&fixture("ones3.csv")),
            "--x0",
            "0.7,0.2,0.1",
            "--output",
            s(&dir.path().join("t.csv")),
        ]);
        assert_eq!(code(&run), 0);
        stdout(&run)
            .split("max_drift = ")
            .nth(1)
            .and_then(|r| r.split(',').next())
            .unwrap()
            .parse::<f64>()
            .unwrap()
    };
    assert!(drift_of("a_hat.csv") > drift_of("a_star.csv"));
}

#[test]
fn unstable_simulation_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let run = conserve(&[
        "simulate",
        "--input",
        s(&fixture("unstable.csv")),
        "--constraints",
        s(&fixture("ones2.csv")),
        "--x0",
        "1,1",
        "--output",
        s(&dir.path().join("t.csv")),
    ]);
    assert_eq!(code(&run), 4);
    assert!(stderr(&run).contains("t = "));
}

#[test]
fn self_test_passes() {
    let run = conserve(&["check", "--self-test"]);
    assert_eq!(code(&run), 0, "{}", stdout(&run));
    assert!(!stdout(&run).contains("FAIL"));
}

#[test]
fn bad_flags_exit_2() {
    assert_eq!(code(&conserve(&["demo", "--n", "banana"])), 2);
    assert_eq!(code(&conserve(&["demo", "--dt", "20"])), 2);
    assert_eq!(code(&conserve(&["frobnicate"])), 2);
}

#[test]
fn demo_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let run = conserve(&["demo", "--seed", "7", "--outdir", s(dir.path())]);
        assert_eq!(code(&run), 0, "{}", stderr(&run));
    }
    let mut names: Vec<_> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() >= 9);
    for name in names {
        let x = fs::read(a.path().join(&name)).unwrap();
        let y = fs::read(b.path().join(&name)).unwrap();
        assert_eq!(x, y, "{name:?} differs");
    }
}

#[test]
fn demo_seed_from_env_and_flag_precedence() {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let run = |dir: &Path, env: Option<&str>, flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_conserve"));
        cmd.args(["demo", "--outdir", s(dir)]);
        if let Some(seed) = flag {
            cmd.args(["--seed", seed]);
        }
        match env {
            Some(v) => cmd.env("CONSERVE_SEED", v),
            None => cmd.env_remove("CONSERVE_SEED"),
        };
        assert!(cmd.output().unwrap().status.success());
        fs::read(dir.join("a_hat.csv")).unwrap()
    };
    let env_only = run(dirs[0].path(), Some("11"), None);
    let flag_only = run(dirs[1].path(), None, Some("11"));
    let both = run(dirs[2].path(), Some("99"), Some("11"));
    assert_eq!(env_only, flag_only);
    assert_eq!(flag_only, both);
}

#[test]
fn noiseless_demo_reports_rank_zero() {
    let dir = tempfile::tempdir().unwrap();
    let run = conserve(&["demo", "--noise-variance", "0", "--outdir", s(dir.path())]);
    assert_eq!(code(&run), 0);
    let report =
        RepairReportFile::from_json(&fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report.correction_rank, 0);
    assert_eq!(report.correction_fro_norm, 0.0);
    let q = fs::read(dir.path().join("q_true.csv")).unwrap();
    assert_eq!(q, fs::read(dir.path().join("a_hat.csv")).unwrap());
    assert_eq!(q, fs::read(dir.path().join("a_star.csv")).unwrap());
}
