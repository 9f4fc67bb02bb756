//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs without the libtest harness so the table is always printed.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use conserve::demo::run_experiment;
use conserve::diagnostics::{correction_rank, eigenvalues, RankPolicy};
use conserve::dynamics::simulate_continuous;
use conserve::io::{parse_matrix, render_matrix, MatrixFormat};
use conserve::oracle::{
    feasible_sampler, kkt_project_columns, nullspace_projector, random_instance,
    random_instance_with_dims, Instance,
};
use conserve::projection::{build_projector, project_multi, project_single};
use conserve::{ConstraintSet, DenseMatrix, ExperimentConfig};

const INSTANCES: u64 = 200;

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

fn instances() -> Vec<Instance> {
    (0..INSTANCES).map(random_instance).collect()
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    match limit {
        Some(limit) => Outcome::new(
            out.passed && elapsed < limit,
            format!(
                "{}; {:.3}s (limit {:.0}s)",
                out.detail,
                elapsed.as_secs_f64(),
                limit.as_secs_f64()
            ),
        ),
        None => out,
    }
}

fn feasibility(family: &[Instance]) -> Outcome {
    let mut worst_ratio: f64 = 0.0;
    for inst in family {
        let r = project_multi(&inst.a_hat, &inst.constraints).unwrap();
        let bound = 1e-10 * (1.0 + inst.a_hat.fro_norm() * inst.constraints.matrix().fro_norm());
        let v = inst
            .constraints
            .matrix()
            .transpose_matmul(&r.corrected)
            .unwrap()
            .max_abs();
        worst_ratio = worst_ratio.max(v / bound);
    }
    Outcome::new(
        worst_ratio <= 1.0,
        format!("{INSTANCES} instances, worst |CᵀA*|/bound = {worst_ratio:.3e}"),
    )
}

fn oracle_equivalence(family: &[Instance]) -> Outcome {
    let mut kkt_worst: f64 = 0.0;
    let mut proj_worst: f64 = 0.0;
    for inst in family {
        let r = project_multi(&inst.a_hat, &inst.constraints).unwrap();
        let kkt = kkt_project_columns(&inst.a_hat, &inst.constraints, None).unwrap();
        kkt_worst =
            kkt_worst.max(kkt.sub(&r.corrected).unwrap().max_abs() / (1.0 + inst.a_hat.fro_norm()));
        let p = build_projector(&inst.constraints).unwrap();
        let q = nullspace_projector(&inst.constraints).unwrap();
        proj_worst = proj_worst.max(q.sub(p.matrix()).unwrap().max_abs());
    }
    Outcome::new(
        kkt_worst <= 1e-9 && proj_worst <= 1e-10,
        format!(
            "KKT scaled gap {kkt_worst:.3e} (tol 1e-9), projector gap {proj_worst:.3e} (tol 1e-10)"
        ),
    )
}

fn optimality(family: &[Instance]) -> Outcome {
    let mut worst_gap: f64 = f64::INFINITY;
    let mut worst_ip: f64 = 0.0;
    let mut ok = true;
    for inst in family {
        let r = project_multi(&inst.a_hat, &inst.constraints).unwrap();
        let residual = inst.a_hat.sub(&r.corrected).unwrap();
        for k in 0..10 {
            let m = feasible_sampler(&inst.constraints, inst.seed * 1000 + k).unwrap();
            let gap = m.sub(&inst.a_hat).unwrap().fro_norm() - r.correction_fro_norm;
            let ip = residual.frobenius_dot(&m).unwrap().abs();
            let ip_bound = 1e-10 * inst.a_hat.fro_norm() * m.fro_norm();
            worst_gap = worst_gap.min(gap);
            if ip_bound > 0.0 {
                worst_ip = worst_ip.max(ip / ip_bound);
            }
            ok &= gap >= -1e-12 && ip <= ip_bound;
        }
    }
    Outcome::new(
        ok,
        format!(
            "{} feasible samples, min(‖M−Â‖ − ‖A*−Â‖) = {worst_gap:.3e}, worst |⟨Â−A*,M⟩|/bound = {worst_ip:.3e}",
            INSTANCES * 10
        ),
    )
}

fn rank_claims(family: &[Instance]) -> Outcome {
    let mut mismatches = 0;
    let mut single_checked = 0;
    let mut single_bad = 0;
    for inst in family {
        let r = project_multi(&inst.a_hat, &inst.constraints).unwrap();
        let v_rank = correction_rank(&r.violation_before, RankPolicy::default()).unwrap();
        if r.correction_rank != v_rank {
            mismatches += 1;
        }
        if inst.constraints.count() == 1 && r.violation_before.max_abs() > 0.0 {
            single_checked += 1;
            if r.correction_rank != 1 {
                single_bad += 1;
            }
        }
    }
    let demo = run_experiment(&ExperimentConfig::default()).unwrap();
    let demo_ok = demo.repair.correction_rank == 1;
    Outcome::new(
        mismatches == 0 && single_bad == 0 && single_checked > 0 && demo_ok,
        format!(
            "rank(Δ) ≠ rank(CᵀÂ) on {mismatches}/{INSTANCES}; m=1 rank ≠ 1 on {single_bad}/{single_checked}; demo rank {}",
            demo.repair.correction_rank
        ),
    )
}

fn correction_norm_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
        let n = rng.random_range(2..=8usize);
        let inst = random_instance_with_dims(&mut rng, seed, n, 1);
        let c = inst.constraints.matrix().column_vec(0);
        let r = project_single(&inst.a_hat, &c).unwrap();
        let c_norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        let expected = r.violation_before.fro_norm() / c_norm;
        worst = worst.max((r.correction_fro_norm - expected).abs() / expected);
    }
    Outcome::new(
        worst <= 1e-12,
        format!("100 instances, worst relative error {worst:.3e} (tol 1e-12)"),
    )
}

fn spectral_structure(family: &[Instance]) -> Outcome {
    let mut failures = 0;
    let mut worst_ratio: f64 = 0.0;
    for inst in family {
        let r = project_multi(&inst.a_hat, &inst.constraints).unwrap();
        let tol = 1e-8 * (1.0 + r.corrected.fro_norm());
        let mut moduli: Vec<f64> = eigenvalues(&r.corrected)
            .unwrap()
            .iter()
            .map(|e| e.modulus())
            .collect();
        moduli.sort_by(f64::total_cmp);
        let m = inst.constraints.count();
        worst_ratio = worst_ratio.max(moduli[m - 1] / tol);
        if moduli[m - 1] > tol {
            failures += 1;
        }
    }
    Outcome::new(
        failures == 0,
        format!("{failures}/{INSTANCES} lack m near-zero eigenvalues; worst m-th |λ|/tol = {worst_ratio:.3e}"),
    )
}

fn drift_elimination() -> Outcome {
    let mut repaired_worst: f64 = 0.0;
    let mut learned_min = f64::INFINITY;
    let mut ok = 0;
    for seed in 0..20u64 {
        let cfg = ExperimentConfig {
            seed,
            ..ExperimentConfig::default()
        };
        let exp = run_experiment(&cfg).unwrap();
        repaired_worst = repaired_worst.max(exp.repaired_drift.max_drift);
        learned_min = learned_min.min(exp.learned_drift.max_drift);
        if exp.repaired_drift.max_drift <= 1e-10 && exp.learned_drift.max_drift > 1e-3 {
            ok += 1;
        }
    }
    Outcome::new(
        ok == 20,
        format!("{ok}/20 seeds; worst repaired drift {repaired_worst:.3e}, smallest learned drift {learned_min:.3e}"),
    )
}

fn rk4_error(dt: f64) -> f64 {
    let a = DenseMatrix::from_rows(&[[-1.0, -1.0], [1.0, 1.0]]).unwrap();
    let c = ConstraintSet::single(&[1.0, 1.0]).unwrap();
    let traj = simulate_continuous(&a, &c, &[1.0, 0.0], 1.0, dt).unwrap();
    let x = traj.states.last().unwrap();
    (x[0] - 0.0).abs().max((x[1] - 1.0).abs())
}

fn rk4_order() -> Outcome {
    let coarse = rk4_error(0.02);
    let fine = rk4_error(0.01);
    let factor = coarse / fine;
    Outcome::new(
        factor >= 12.0,
        format!("error(dt=0.02) = {coarse:.3e}, error(dt=0.01) = {fine:.3e}, reduction factor {factor:.3e} (need ≥ 12)"),
    )
}

fn idempotence_and_scale(family: &[Instance]) -> Outcome {
    let mut worst_idem: f64 = 0.0;
    let mut worst_scale: f64 = 0.0;
    for inst in family {
        let once = project_multi(&inst.a_hat, &inst.constraints).unwrap();
        let twice = project_multi(&once.corrected, &inst.constraints).unwrap();
        worst_idem = worst_idem.max(twice.correction.fro_norm() / inst.a_hat.fro_norm());
        let c = inst.constraints.matrix().column_vec(0);
        let scaled: Vec<f64> = c.iter().map(|v| 7.3 * v).collect();
        let r1 = project_single(&inst.a_hat, &c).unwrap();
        let r2 = project_single(&inst.a_hat, &scaled).unwrap();
        worst_scale = worst_scale.max(r1.corrected.sub(&r2.corrected).unwrap().max_abs());
    }
    Outcome::new(
        worst_idem <= 1e-12 && worst_scale <= 1e-12,
        format!("re-projection ‖Δ‖/‖Â‖ = {worst_idem:.3e} (tol 1e-12), c vs 7.3c gap {worst_scale:.3e} (tol 1e-12)"),
    )
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn run_cli(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_conserve"))
        .args(args)
        .env_remove("CONSERVE_SEED")
        .output()
        .expect("binary runs")
        .status
        .code()
        .expect("exit code")
}

fn format_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    for k in 0..1000 {
        let rows = rng.random_range(1..=8usize);
        let cols = rng.random_range(1..=8usize);
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| loop {
                let v = f64::from_bits(rng.random::<u64>());
                if v.is_finite() {
                    break v;
                }
            })
            .collect();
        let m = DenseMatrix::new(rows, cols, data).unwrap();
        let fmt = if k % 2 == 0 {
            MatrixFormat::Csv
        } else {
            MatrixFormat::Json
        };
        let back = parse_matrix(Path::new("roundtrip"), &render_matrix(&m, fmt)).unwrap();
        let same = m
            .as_slice()
            .iter()
            .zip(back.as_slice())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        if !same || back.shape() != m.shape() {
            mismatches += 1;
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a_star.csv");
    let s = |p: &Path| p.to_str().unwrap().to_owned();
    let (a_hat, ones3, out_s) = (s(&fixture("a_hat.csv")), s(&fixture("ones3.csv")), s(&out));
    let codes = [
        (
            0,
            run_cli(&[
                "project",
                "--input",
                &a_hat,
                "--constraints",
                &ones3,
                "--output",
                &out_s,
            ]),
        ),
        (
            0,
            run_cli(&["check", "--input", &out_s, "--constraints", &ones3]),
        ),
        (
            1,
            run_cli(&["check", "--input", &a_hat, "--constraints", &ones3]),
        ),
        (
            2,
            run_cli(&[
                "check",
                "--input",
                &s(&fixture("malformed.csv")),
                "--constraints",
                &ones3,
            ]),
        ),
        (
            3,
            run_cli(&[
                "project",
                "--input",
                &a_hat,
                "--constraints",
                &s(&fixture("zeros3.csv")),
                "--output",
                &out_s,
            ]),
        ),
        (
            4,
            run_cli(&[
                "simulate",
                "--input",
                &s(&fixture("unstable.csv")),
                "--constraints",
                &s(&fixture("ones2.csv")),
                "--x0",
                "1,1",
                "--output",
                &s(&dir.path().join("t.csv")),
            ]),
        ),
    ];
    let bad: Vec<String> = codes
        .iter()
        .filter(|(want, got)| want != got)
        .map(|(want, got)| format!("want {want} got {got}"))
        .collect();
    Outcome::new(
        mismatches == 0 && bad.is_empty(),
        format!(
            "1000 round trips, {mismatches} mismatches; exit codes {}",
            if bad.is_empty() {
                "0/1/2/3/4 as expected".to_string()
            } else {
                bad.join(", ")
            }
        ),
    )
}

fn main() {
    let family = instances();
    let criteria: Vec<(&str, Outcome)> = vec![
        (
            "1 feasibility",
            timed(Some(Duration::from_secs(1)), || feasibility(&family)),
        ),
        (
            "2 oracle equivalence",
            timed(Some(Duration::from_secs(2)), || oracle_equivalence(&family)),
        ),
        ("3 optimality", optimality(&family)),
        ("4 rank claims", rank_claims(&family)),
        ("5 correction-norm identity", correction_norm_identity()),
        ("6 spectral structure", spectral_structure(&family)),
        (
            "7 drift elimination",
            timed(Some(Duration::from_secs(5)), drift_elimination),
        ),
        ("8 RK4 order", rk4_order()),
        (
            "9 idempotence and scale invariance",
            idempotence_and_scale(&family),
        ),
        ("10 format and CLI contract", format_contract()),
    ];
    let mut failed = 0;
    for (name, outcome) in &criteria {
        let tag = if outcome.passed { "PASS" } else { "FAIL" };
        if !outcome.passed {
            failed += 1;
        }
        println!("{tag} [{name}] {}", outcome.detail);
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
