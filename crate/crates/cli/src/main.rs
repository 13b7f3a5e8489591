//! `igabem` batch driver.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use igabem::adaptivity::{adaptive_loop, AdaptiveState, DorflerConvention, IterationRecord, LoopConfig, Mode};
use igabem::convergence::fit_order;
use igabem::galerkin::QuadConfig;
use igabem::hierarchy::MeshSnapshot;
use igabem::problems::{builtin, parse_problem_file, ProblemDefinition};
use igabem::quadrature::moments::Precision;
use igabem::quadrature::kernel::Geometry;
use igabem::Error;

const SAMPLES_PER_CELL: usize = 4;

#[derive(Parser)]
#[command(name = "igabem", version, about = "Adaptive isogeometric BEM for the 2D Laplace equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a refinement loop and write its artifacts.
    Run(RunArgs),
    /// Fit the convergence order of a convergence.csv file.
    FitOrder {
        #[arg(long)]
        csv: PathBuf,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Built-in problem (slit, pacman, lshape) or path to a problem file.
    #[arg(long)]
    problem: String,
    #[arg(long, value_enum, default_value_t = ModeArg::Adaptive)]
    mode: ModeArg,
    /// Marking parameter; defaults to the problem's reference value.
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, default_value_t = 10)]
    max_iter: usize,
    #[arg(long)]
    target_nh: Option<usize>,
    #[arg(long)]
    n_inner: Option<usize>,
    #[arg(long)]
    n_outer: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long, value_enum, default_value_t = PrecisionArg::Extended)]
    precision: PrecisionArg,
    #[arg(long, value_enum, default_value_t = ConventionArg::Squared)]
    convention: ConventionArg,
    #[arg(long, env = "IGABEM_OUT_DIR", default_value = "igabem-out")]
    out: PathBuf,
    #[arg(long, env = "IGABEM_THREADS")]
    threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    Uniform,
    Adaptive,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PrecisionArg {
    Double,
    Extended,
    Auto,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ConventionArg {
    Linear,
    Squared,
}

/// Failure of a run, mapped to an exit code.
#[derive(Debug)]
enum Failure {
    Config(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Numerical(_) => 1,
            Failure::Config(_) => 2,
        }
    }

    fn json(&self, stage: &str) -> String {
        let (kind, message) = match self {
            Failure::Config(m) => ("config", m),
            Failure::Numerical(m) => ("numerical", m),
        };
        json!({ "error": message, "kind": kind, "stage": stage }).to_string()
    }
}

fn config_error(e: Error) -> Failure {
    match e {
        Error::ThetaOutOfRange(theta) => Failure::Config(format!("theta out of range: {theta}")),
        other => Failure::Config(other.to_string()),
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Failure {
    Failure::Numerical(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, result) = match cli.command {
        Command::Run(args) => ("run", run(&args)),
        Command::FitOrder { csv } => ("fit-order", fit_csv(&csv).map(|slope| println!("{slope}"))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.json(stage));
            ExitCode::from(f.code())
        }
    }
}

/// Where the problem came from, kept in the metadata for replay.
#[derive(Serialize)]
struct ProblemSource {
    argument: String,
    name: String,
    file_contents: Option<serde_json::Value>,
}

fn load_problem(arg: &str) -> Result<(ProblemDefinition, ProblemSource), Failure> {
    if let Some(p) = builtin(arg) {
        let source = ProblemSource { argument: arg.into(), name: p.name.clone(), file_contents: None };
        return Ok((p, source));
    }
    let path = Path::new(arg);
    if !path.exists() {
        return Err(Failure::Config(format!("unknown problem '{arg}'")));
    }
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{arg}: {e}")))?;
    let problem = parse_problem_file(&text).map_err(config_error)?;
    let contents = serde_json::from_str(&text).ok();
    let source = ProblemSource { argument: arg.into(), name: problem.name.clone(), file_contents: contents };
    Ok((problem, source))
}

fn loop_config(args: &RunArgs, problem: &ProblemDefinition) -> LoopConfig {
    let r = problem.reference;
    LoopConfig {
        mode: match args.mode {
            ModeArg::Uniform => Mode::Uniform,
            ModeArg::Adaptive => Mode::Adaptive,
        },
        theta: args.theta.unwrap_or(r.theta),
        max_iter: args.max_iter,
        target_nh: args.target_nh,
        quad: QuadConfig {
            n_inner: args.n_inner.unwrap_or(r.n_inner),
            n_outer: args.n_outer.unwrap_or(r.n_outer),
            p: args.p.unwrap_or(r.p),
            precision: match args.precision {
                PrecisionArg::Double => Precision::Double,
                PrecisionArg::Extended => Precision::Extended,
                PrecisionArg::Auto => Precision::Auto,
            },
        },
        convention: match args.convention {
            ConventionArg::Linear => DorflerConvention::Linear,
            ConventionArg::Squared => DorflerConvention::Squared,
        },
    }
}

#[derive(Serialize)]
struct MeshFile<'a> {
    iteration: usize,
    n_h: usize,
    mesh: &'a MeshSnapshot,
    eta: &'a [f64],
    marked: &'a [usize],
}

fn run(args: &RunArgs) -> Result<(), Failure> {
    let (problem, source) = load_problem(&args.problem)?;
    let config = loop_config(args, &problem);
    config.validate().map_err(config_error)?;
    if args.threads == Some(0) {
        return Err(Failure::Config("thread count must be positive".into()));
    }
    if let Some(n) = args.threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let geometry = problem.geometry().map_err(config_error)?;
    fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;

    let start = Instant::now();
    let mut io_failure = None;
    let records = adaptive_loop(&problem, &config, |state| {
        write_iteration(&args.out, &geometry, &problem, state).map_err(|f| {
            let msg = format!("{f:?}");
            io_failure = Some(f);
            Error::Io(msg)
        })
    });
    if let Some(f) = io_failure {
        return Err(f);
    }
    let records = records.map_err(|e| Failure::Numerical(e.to_string()))?;
    let total_seconds = start.elapsed().as_secs_f64();

    write_convergence(&args.out.join("convergence.csv"), &records)?;
    write_plot(&args.out.join("plot.gp"), &problem)?;
    let slope = slope_to_date(&records);
    let metadata = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "problem": source,
        "approach": problem.approach,
        "error_norm": problem.error_norm,
        "config": config,
        "threads": args.threads,
        "out": args.out,
        "fitted_slope": slope,
        "total_seconds": total_seconds,
        "iterations": records,
    });
    write_text(&args.out.join("metadata.json"), &pretty(&metadata))?;
    Ok(())
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn write_iteration(
    out: &Path,
    geometry: &Geometry,
    problem: &ProblemDefinition,
    state: &AdaptiveState,
) -> Result<(), Failure> {
    let k = state.record.iteration;
    let snapshot = state.snapshot();
    let mesh = MeshFile {
        iteration: k,
        n_h: state.record.n_h,
        mesh: &snapshot,
        eta: &state.estimator.local,
        marked: &state.marked,
    };
    write_text(&out.join(format!("mesh_{k}.json")), &pretty(&mesh))?;

    let path = out.join(format!("solution_{k}.csv"));
    let mut buf = Vec::new();
    writeln!(buf, "t,x,y,phi_h,phi_exact").unwrap();
    let basis = &state.space.basis;
    for pos in 0..state.space.mesh.len() {
        let (t0, t1) = state.space.mesh.interval(pos);
        for j in 0..SAMPLES_PER_CELL {
            let t = t0 + (t1 - t0) * (j as f64 + 0.5) / SAMPLES_PER_CELL as f64;
            let node = geometry.node(t);
            let phi = basis.eval_combination(&state.alpha, geometry.wrap(t));
            let exact = problem.datum.flux(node.point, node.normal);
            let exact = exact.map(|v| format!("{v:.16e}")).unwrap_or_default();
            writeln!(buf, "{t:.16e},{:.16e},{:.16e},{phi:.16e},{exact}", node.point[0], node.point[1]).unwrap();
        }
    }
    fs::write(&path, buf).map_err(|e| io_error(&path, e))
}

fn slope_to_date(records: &[IterationRecord]) -> Option<f64> {
    let (n, e): (Vec<f64>, Vec<f64>) = records
        .iter()
        .map(|r| (r.n_h as f64, r.error.unwrap_or(r.eta)))
        .unzip();
    fit_order(&n, &e).ok()
}

fn write_convergence(path: &Path, records: &[IterationRecord]) -> Result<(), Failure> {
    let mut text = String::from("iteration,N_H,cells,eta,error,slope_to_date,marked,max_level\n");
    for (k, r) in records.iter().enumerate() {
        let error = r.error.map(|e| format!("{e:.16e}")).unwrap_or_default();
        let slope = slope_to_date(&records[..=k]).map(|s| format!("{s:.6}")).unwrap_or_default();
        text += &format!(
            "{},{},{},{:.16e},{error},{slope},{},{}\n",
            r.iteration, r.n_h, r.cells, r.eta, r.marked, r.max_level
        );
    }
    write_text(path, &text)
}

fn write_plot(path: &Path, problem: &ProblemDefinition) -> Result<(), Failure> {
    let script = format!(
        r#"# log-log convergence of the error and the estimator against N_H
set datafile separator ","
set logscale xy
set key top right
set grid
set xlabel "N_H"
set title "{name}"
set terminal pngcairo size 800,600
set output "convergence.png"
plot "convergence.csv" using 2:5 skip 1 with linespoints pt 7 title "error", \
     "convergence.csv" using 2:4 skip 1 with linespoints pt 5 title "estimator"
"#,
        name = problem.name
    );
    write_text(path, &script)
}

/// Tail slope of `error` (or `eta` where no error is recorded) against `N_H`.
fn fit_csv(path: &Path) -> Result<f64, Failure> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| Failure::Config(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Failure::Config(format!("missing column {name}")))
    };
    let (nh, err, eta) = (col("N_H")?, col("error")?, col("eta")?);
    let parse = |s: &str| s.parse::<f64>().map_err(|e| Failure::Config(format!("bad value '{s}': {e}")));
    let mut n = Vec::new();
    let mut e = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Failure::Config(e.to_string()))?;
        n.push(parse(&row[nh])?);
        let value = if row[err].is_empty() { &row[eta] } else { &row[err] };
        e.push(parse(value)?);
    }
    fit_order(&n, &e).map_err(config_error)
}
