use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use conserve::demo::{run_experiment, summary_text, write_outputs};
use conserve::diagnostics::{feasibility_bound, spectrum_report, violation, ViolationReport};
use conserve::dynamics::{drift_report, simulate_continuous, simulate_discrete, DriftReport};
use conserve::io::{
    format_f64, parse_vector, read_matrix, trajectory_to_csv, write_atomic, write_matrix,
    MatrixFormat, RepairReportFile, ReportSettings,
};
use conserve::model::{DEFAULT_FEAS_TOL, DEFAULT_RANK_TOL, DEFAULT_ZERO_TOL};
use conserve::projection::{project_affine, project_multi};
use conserve::verify::{self_test, KKT_TOL, PROJECTOR_TOL};
use conserve::{ConstraintSet, DenseMatrix, Error, ExperimentConfig, TimeMode};

const EXIT_INFEASIBLE: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_RANK: u8 = 3;
const EXIT_BLOWUP: u8 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "conserve",
    version,
    about = "Repair linear models so they conserve linear invariants exactly"
)]
struct Cli {
    /// Feasibility tolerance, scaled by 1 + ||A||_F ||C||_F.
    #[arg(long, global = true, default_value_t = DEFAULT_FEAS_TOL)]
    feas_tol: f64,

    /// Relative full-column-rank tolerance for the constraint matrix.
    #[arg(long, global = true, default_value_t = DEFAULT_RANK_TOL)]
    rank_tol: f64,

    /// Format for written matrices (defaults to the input's format, or csv).
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for MatrixFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => MatrixFormat::Csv,
            FormatArg::Json => MatrixFormat::Json,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ModeArg {
    Continuous,
    Discrete,
}

impl From<ModeArg> for TimeMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Continuous => TimeMode::Continuous,
            ModeArg::Discrete => TimeMode::Discrete,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Project an operator onto the set satisfying C^T A = 0 (or = B).
    Project(ProjectArgs),
    /// Report the violation C^T A; exit 1 if it exceeds the tolerance.
    Check(CheckArgs),
    /// Simulate the dynamics and report conservation drift.
    Simulate(SimulateArgs),
    /// Run the noisy Markov-generator experiment end to end.
    Demo(DemoArgs),
}

#[derive(Args, Debug)]
struct ProjectArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    constraints: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// m x n right-hand side B for the affine constraint C^T A = B.
    #[arg(long, alias = "affine_rhs")]
    affine_rhs: Option<PathBuf>,
    /// Write a JSON repair report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[arg(long, required_unless_present = "self_test")]
    input: Option<PathBuf>,
    #[arg(long, required_unless_present = "self_test")]
    constraints: Option<PathBuf>,
    /// Run the oracle equivalence suite instead of checking a file.
    #[arg(long)]
    self_test: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    constraints: PathBuf,
    /// Initial state: inline "0.7,0.2,0.1" or a path to a file holding it.
    #[arg(long)]
    x0: String,
    #[arg(long, default_value_t = 10.0)]
    t_final: f64,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    /// Number of steps in discrete mode (default: round(t_final / dt)).
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, value_enum, default_value_t = ModeArg::Continuous)]
    mode: ModeArg,
    /// Trajectory CSV destination.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct DemoArgs {
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long, default_value_t = 0.05)]
    noise_variance: f64,
    #[arg(long, env = "CONSERVE_SEED", default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "demo_out")]
    outdir: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    t_final: f64,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Continuous)]
    mode: ModeArg,
    /// Initial state (default (0.7, 0.2, 0.1) for n = 3, uniform otherwise).
    #[arg(long)]
    x0: Option<String>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

type CliResult = Result<u8, Failure>;

fn load(path: &Path) -> Result<(DenseMatrix, MatrixFormat), Failure> {
    read_matrix(path).map_err(|e| Failure::input(e.to_string()))
}

fn load_constraints(path: &Path, rank_tol: f64, n: usize) -> Result<ConstraintSet, Failure> {
    let (c, _) = load(path)?;
    if c.rows() != n {
        return Err(Failure::input(format!(
            "{}: constraint matrix has {} rows, operator has dimension {n}",
            path.display(),
            c.rows()
        )));
    }
    ConstraintSet::validate(c, rank_tol).map_err(|e| match e {
        Error::RankDeficient { .. } => Failure {
            code: EXIT_RANK,
            message: format!(
                "{}: constraint matrix is rank deficient ({e})",
                path.display()
            ),
        },
        other => Failure::input(format!("{}: {other}", path.display())),
    })
}

fn load_square(path: &Path) -> Result<(DenseMatrix, MatrixFormat), Failure> {
    let (a, f) = load(path)?;
    if !a.is_square() {
        return Err(Failure::input(format!(
            "{}: operator must be square, got {}x{}",
            path.display(),
            a.rows(),
            a.cols()
        )));
    }
    Ok((a, f))
}

fn print_violation(label: &str, r: &ViolationReport) {
    println!(
        "{label}: max_abs = {:.6e}, fro_norm = {:.6e}",
        r.max_abs, r.fro_norm
    );
    for (i, norm) in r.per_invariant_norms.iter().enumerate() {
        let row: Vec<String> = r
            .violation_matrix
            .row(i)
            .iter()
            .map(|v| format!("{v:+.6e}"))
            .collect();
        println!(
            "  invariant {}: norm {:.6e}  [{}]",
            i + 1,
            norm,
            row.join(", ")
        );
    }
}

fn cmd_project(cli: &Cli, args: &ProjectArgs) -> CliResult {
    let (a_hat, input_format) = load_square(&args.input)?;
    let constraints = load_constraints(&args.constraints, cli.rank_tol, a_hat.rows())?;
    let repair = match &args.affine_rhs {
        Some(path) => {
            let (b, _) = load(path)?;
            let expected = (constraints.count(), a_hat.rows());
            if b.shape() != expected {
                return Err(Failure::input(format!(
                    "{}: affine right-hand side must be {}x{}, got {}x{}",
                    path.display(),
                    expected.0,
                    expected.1,
                    b.rows(),
                    b.cols()
                )));
            }
            project_affine(&a_hat, &constraints, &b)
        }
        None => project_multi(&a_hat, &constraints),
    }
    .map_err(|e| Failure::input(e.to_string()))?;

    let out_format = cli.format.map(MatrixFormat::from).unwrap_or(input_format);
    write_matrix(&args.output, &repair.corrected, out_format)
        .map_err(|e| Failure::input(e.to_string()))?;

    print_violation(
        "violation before",
        &ViolationReport::from_matrix(repair.violation_before.clone()),
    );
    print_violation(
        "violation after",
        &ViolationReport::from_matrix(repair.violation_after.clone()),
    );
    println!(
        "correction: fro_norm = {:.6e}, rank = {}",
        repair.correction_fro_norm, repair.correction_rank
    );

    if let Some(path) = &args.report {
        let spectrum = spectrum_report(&a_hat, &repair.corrected, DEFAULT_ZERO_TOL)
            .map_err(|e| Failure::input(e.to_string()))?;
        let report = RepairReportFile::new(
            args.input.display().to_string(),
            args.constraints.display().to_string(),
            &repair,
            &spectrum,
            ReportSettings {
                feas_tol: cli.feas_tol,
                rank_tol: cli.rank_tol,
            },
        );
        write_atomic(path, report.to_json().as_bytes())
            .map_err(|e| Failure::input(e.to_string()))?;
    }
    Ok(0)
}

fn cmd_self_test() -> CliResult {
    let report = self_test(100).map_err(|e| Failure::input(e.to_string()))?;
    let line = |name: &str, value: f64, tol: f64| {
        let status = if value <= tol { "PASS" } else { "FAIL" };
        println!("{status} {name}: {value:.3e} (tol {tol:.0e})");
    };
    println!(
        "oracle self-test over {} seeded instances",
        report.instances
    );
    line("KKT vs closed form", report.kkt_discrepancy, KKT_TOL);
    line(
        "KKT vs affine closed form",
        report.affine_discrepancy,
        KKT_TOL,
    );
    line(
        "null-space basis vs projector",
        report.projector_discrepancy,
        PROJECTOR_TOL,
    );
    Ok(if report.passed() { 0 } else { EXIT_INFEASIBLE })
}

fn cmd_check(cli: &Cli, args: &CheckArgs) -> CliResult {
    if args.self_test {
        return cmd_self_test();
    }
    let (input, constraints) = match (&args.input, &args.constraints) {
        (Some(i), Some(c)) => (i, c),
        _ => return Err(Failure::input("--input and --constraints are required")),
    };
    let (a, _) = load_square(input)?;
    let constraints = load_constraints(constraints, cli.rank_tol, a.rows())?;
    let report = violation(&a, &constraints).map_err(|e| Failure::input(e.to_string()))?;
    let bound = feasibility_bound(cli.feas_tol, &a, &constraints);
    print_violation("violation", &report);
    if report.max_abs <= bound {
        println!("feasible (max_abs <= {bound:.3e})");
        Ok(0)
    } else {
        println!("infeasible (max_abs > {bound:.3e})");
        Ok(EXIT_INFEASIBLE)
    }
}

fn read_x0(spec: &str) -> Result<Vec<f64>, Failure> {
    let path = Path::new(spec);
    let text = if path.is_file() {
        fs::read_to_string(path).map_err(|e| Failure::input(format!("{spec}: {e}")))?
    } else {
        spec.to_string()
    };
    parse_vector(&text).map_err(|e| Failure::input(format!("x0: {e}")))
}

fn print_drift(label: &str, r: &DriftReport) {
    println!(
        "{label}: max_drift = {}, final_drift = {}",
        format_f64(r.max_drift),
        format_f64(r.final_drift)
    );
}

fn simulation_failure(e: Error) -> Failure {
    match e {
        Error::NonFinite { step, time } => Failure {
            code: EXIT_BLOWUP,
            message: format!("simulation blew up at step {step}, t = {time}"),
        },
        other => Failure::input(other.to_string()),
    }
}

fn cmd_simulate(cli: &Cli, args: &SimulateArgs) -> CliResult {
    let (a, _) = load_square(&args.input)?;
    let constraints = load_constraints(&args.constraints, cli.rank_tol, a.rows())?;
    let x0 = read_x0(&args.x0)?;
    if x0.len() != a.rows() {
        return Err(Failure::input(format!(
            "x0 has length {}, expected {}",
            x0.len(),
            a.rows()
        )));
    }
    let traj = match args.mode {
        ModeArg::Continuous => simulate_continuous(&a, &constraints, &x0, args.t_final, args.dt),
        ModeArg::Discrete => {
            let steps = args
                .steps
                .unwrap_or_else(|| (args.t_final / args.dt).round().max(1.0) as usize);
            simulate_discrete(&a, &constraints, &x0, steps)
        }
    }
    .map_err(simulation_failure)?;
    write_atomic(&args.output, trajectory_to_csv(&traj).as_bytes())
        .map_err(|e| Failure::input(e.to_string()))?;
    print_drift("drift", &drift_report(&traj));
    Ok(0)
}

fn cmd_demo(cli: &Cli, args: &DemoArgs) -> CliResult {
    let mut config = ExperimentConfig::with_dim(args.n);
    config.noise_variance = args.noise_variance;
    config.seed = args.seed;
    config.t_final = args.t_final;
    config.dt = args.dt;
    config.mode = args.mode.into();
    if let Some(x0) = &args.x0 {
        config.x0 = read_x0(x0)?;
    }
    config
        .validate()
        .map_err(|e| Failure::input(e.to_string()))?;
    let exp = run_experiment(&config).map_err(simulation_failure)?;
    let format = cli
        .format
        .map(MatrixFormat::from)
        .unwrap_or(MatrixFormat::Csv);
    let settings = ReportSettings {
        feas_tol: cli.feas_tol,
        rank_tol: cli.rank_tol,
    };
    write_outputs(&exp, &args.outdir, format, settings)
        .map_err(|e| Failure::input(e.to_string()))?;
    print!("{}", summary_text(&exp));
    println!();
    println!("outputs written to {}", args.outdir.display());
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Project(args) => cmd_project(&cli, args),
        Command::Check(args) => cmd_check(&cli, args),
        Command::Simulate(args) => cmd_simulate(&cli, args),
        Command::Demo(args) => cmd_demo(&cli, args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
