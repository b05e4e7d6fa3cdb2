use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stl_synth::driver::{unrolled, SynthesisError};
use stl_synth::io::{self, GainsFile, PlanFile, SystemFile};
use stl_synth::linsys::{track, LinearSystem};
use stl_synth::stl::{parse_formula, robustness, StlFormula};
use stl_synth::{synthesize, Status, SynthesisConfig};
use stl_synth_smt::Backend;

const EXIT_OK: u8 = 0;
const EXIT_UNSAT: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_USAGE: u8 = 3;
const EXIT_BACKEND: u8 = 4;

/// Trajectory synthesis for linear systems from bounded-time STL formulas.
#[derive(Parser, Debug)]
#[command(name = "stlsynth", version)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize a nominal run, plan and tracking gains.
    Synthesize(SynthArgs),
    /// Evaluate the robustness of a run CSV against a formula.
    Check(CheckArgs),
    /// Track a nominal run in closed loop under seeded disturbances.
    Simulate(SimArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    system: PathBuf,
    /// Initial state, comma separated; overrides the system file.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    /// Dynamics tolerance δ.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long)]
    kmax: Option<usize>,
    /// Q as a multiple of the identity.
    #[arg(long, default_value_t = 1.0)]
    q: f64,
    /// R as a multiple of the identity.
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    /// Q_f as a multiple of the identity.
    #[arg(long, default_value_t = 10.0)]
    qf: f64,
    /// Cap on every stretch l_i (default: the formula horizon).
    #[arg(long)]
    max_stretch: Option<usize>,
    /// `embedded`, `smtlib` (solver from STLSYNTH_SMT_SOLVER or PATH) or
    /// `smtlib:<path>`.
    #[arg(long, default_value = "embedded")]
    smt_backend: String,
    /// Nominal run, unrolled along its loop over the formula horizon.
    #[arg(long)]
    out_run: Option<PathBuf>,
    #[arg(long)]
    out_plan: Option<PathBuf>,
    #[arg(long)]
    out_gains: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    run: PathBuf,
    /// Time index to evaluate at.
    #[arg(long, default_value_t = 0)]
    at: usize,
}

#[derive(Args, Debug)]
struct SimArgs {
    #[arg(long)]
    system: PathBuf,
    /// Nominal run CSV.
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    gains: PathBuf,
    /// Formula to evaluate each execution against.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of executions.
    #[arg(long, default_value_t = 1)]
    runs: usize,
    /// Per-step disturbance drawn uniformly from [-w, w]^n.
    #[arg(long, default_value_t = 0.0)]
    disturbance: f64,
    /// Initial state perturbation drawn uniformly from [-e, e]^n.
    #[arg(long, default_value_t = 0.0)]
    x0_noise: f64,
    /// First execution.
    #[arg(long)]
    out_run: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl std::fmt::Display) -> Failure {
    Failure { code: EXIT_USAGE, message: message.to_string() }
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path).map(BufReader::new).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_system(path: &Path) -> Result<(SystemFile, LinearSystem), Failure> {
    let file = io::read_system(open(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let sys = file.system().map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok((file, sys))
}

fn load_formula(path: &Path, names: &[String]) -> Result<StlFormula, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    parse_formula(&text, names).map_err(|e| usage(format!("{}:{e}", path.display())))
}

fn initial_state(arg: &Option<Vec<f64>>, file: &SystemFile, n: usize) -> Result<DVector<f64>, Failure> {
    let x0 = match arg {
        Some(v) => DVector::from_column_slice(v),
        None => file.x0().ok_or_else(|| usage("no initial state: pass --x0 or set x0 in the system file"))?,
    };
    if x0.len() != n {
        return Err(usage(format!("initial state has {} entries, the system has {n} states", x0.len())));
    }
    Ok(x0)
}

fn synthesize_cmd(a: &SynthArgs) -> Result<u8, Failure> {
    let (file, sys) = load_system(&a.system)?;
    let f = load_formula(&a.spec, &sys.var_names())?;
    let x0 = initial_state(&a.x0, &file, sys.n())?;
    let (n, m) = (sys.n(), sys.m());
    let mut cfg = SynthesisConfig::new(f, sys, x0);
    cfg.delta = a.tol;
    cfg.k_max = a.kmax;
    cfg.q = DMatrix::identity(n, n) * a.q;
    cfg.r = DMatrix::identity(m, m) * a.r;
    cfg.qf = DMatrix::identity(n, n) * a.qf;
    cfg.feas.max_stretch = a.max_stretch;
    cfg.backend = Backend::parse(&a.smt_backend).map_err(|e| Failure { code: EXIT_BACKEND, message: e.to_string() })?;

    let res = synthesize(&cfg).map_err(|e| match e {
        SynthesisError::Config(_) | SynthesisError::LinSys(_) => usage(e),
        _ => Failure { code: EXIT_BACKEND, message: e.to_string() },
    })?;
    let d = &res.diagnostics;
    println!("status: {:?}", res.status);
    println!("K reached: {}", d.k_reached);
    println!("SMT checks: {}, LP solves: {}, wall time: {:.3} s", d.smt_calls, d.lp_calls, d.wall_time.as_secs_f64());
    match res.status {
        Status::Satisfied => {}
        Status::Unsatisfiable => return Ok(EXIT_UNSAT),
        Status::InfeasibleDynamics => return Ok(EXIT_INFEASIBLE),
    }
    let (Some(run), Some(plan), Some(gains)) = (&res.run, &res.plan, &res.gains) else {
        return Err(Failure { code: EXIT_BACKEND, message: "satisfied result without a run".into() });
    };
    println!("plan: K = {}, L = {}, stretches {:?}", plan.k(), plan.loop_index, plan.stretches);
    println!("plan robustness: {:.9}", res.plan_robustness);
    println!("robustness: {:.9}", res.robustness);
    let sys = &cfg.system;
    if let Some(p) = &a.out_run {
        let full = unrolled(&cfg.formula, run, res.loop_index);
        io::write_run(create(p)?, &full, &sys.state_names, &sys.input_names).map_err(usage)?;
    }
    if let Some(p) = &a.out_plan {
        io::write_json(create(p)?, &PlanFile::from_plan(plan)).map_err(usage)?;
    }
    if let Some(p) = &a.out_gains {
        io::write_json(create(p)?, &GainsFile::from_schedule(gains)).map_err(usage)?;
    }
    Ok(EXIT_OK)
}

fn check_cmd(a: &CheckArgs) -> Result<u8, Failure> {
    let header = {
        let mut rdr = stl_synth::io::read_run(open(&a.run)?, 0, None).map_err(usage)?;
        std::mem::take(&mut rdr.names)
    };
    let file = io::read_run(open(&a.run)?, header.len(), None).map_err(usage)?;
    let f = load_formula(&a.spec, &header)?;
    let rho = robustness(&f, &file.run, a.at).map_err(usage)?;
    println!("robustness: {rho:.9}");
    println!("satisfied: {}", rho > 0.0);
    Ok(if rho > 0.0 { EXIT_OK } else { EXIT_UNSAT })
}

fn simulate_cmd(a: &SimArgs) -> Result<u8, Failure> {
    let (_, sys) = load_system(&a.system)?;
    let nominal = io::read_run(open(&a.run)?, sys.n(), Some(sys.ts)).map_err(usage)?.run;
    if nominal.states.first().is_none_or(|x| x.len() != sys.n()) {
        return Err(usage("nominal run does not match the system"));
    }
    let gains: GainsFile = io::read_json(open(&a.gains)?).map_err(usage)?;
    let gains = gains.schedule().map_err(usage)?;
    let f = a.spec.as_ref().map(|p| load_formula(p, &sys.var_names())).transpose()?;
    let x0 = match &a.x0 {
        Some(v) if v.len() == sys.n() => DVector::from_column_slice(v),
        Some(_) => return Err(usage("--x0 does not match the system")),
        None => nominal.states[0].clone(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let (mut max_err, mut min_rho) = (0.0f64, f64::INFINITY);
    for i in 0..a.runs {
        let (w, e) = (a.disturbance, a.x0_noise);
        let start = x0.map(|v| if e > 0.0 { v + rng.random_range(-e..=e) } else { v });
        let mut dist = |_: usize| DVector::from_fn(sys.n(), |_, _| if w > 0.0 { rng.random_range(-w..=w) } else { 0.0 });
        let exec = track(&sys, &nominal, &gains, &start, Some(&mut dist)).map_err(usage)?;
        let err = exec.states.iter().zip(&nominal.states).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max);
        max_err = max_err.max(err);
        if let Some(f) = &f {
            min_rho = min_rho.min(robustness(f, &exec, 0).map_err(usage)?);
        }
        if i == 0 {
            if let Some(p) = &a.out_run {
                io::write_run(create(p)?, &exec, &sys.state_names, &sys.input_names).map_err(usage)?;
            }
        }
    }
    println!("executions: {}", a.runs);
    println!("max tracking error: {max_err:.9}");
    if f.is_some() {
        println!("min robustness: {min_rho:.9}");
        return Ok(if min_rho > 0.0 { EXIT_OK } else { EXIT_UNSAT });
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let out = match &cli.command {
        Command::Synthesize(a) => synthesize_cmd(a),
        Command::Check(a) => check_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
    };
    match out {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
