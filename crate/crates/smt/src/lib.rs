//! Incremental satisfiability checking for quantifier-free linear real
//! arithmetic with Boolean structure and bounded integer comparisons.
//!
//! Two backends implement [`Solver`]: [`EmbeddedSolver`], a self-contained
//! CDCL(T) engine with exact rational simplex, and [`SmtLibProcess`], which
//! drives an external solver over SMT-LIB2.

mod embedded;
mod expr;
mod smtlib;

pub use embedded::EmbeddedSolver;
pub use expr::{BoolVar, Expr, IntVar, Linear, RealVar, Rel};
pub use smtlib::{real_literal, SmtLibProcess};

use std::path::{Path, PathBuf};

/// Environment variable naming an external SMT-LIB2 solver binary.
pub const SOLVER_ENV: &str = "STLSYNTH_SMT_SOLVER";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SatResult {
    Sat,
    Unsat,
}

#[derive(Debug, thiserror::Error)]
pub enum SmtError {
    #[error("failed to start solver: {0}")]
    Spawn(String),
    #[error("solver i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("solver protocol: {0}")]
    Protocol(String),
    #[error("solver answered {0:?}")]
    Unknown(String),
    #[error("invalid term: {0}")]
    InvalidTerm(String),
    #[error("no model available")]
    NoModel,
    #[error("pop on empty assertion stack")]
    PopEmpty,
}

/// Incremental solver interface shared by all backends.
pub trait Solver {
    fn new_bool(&mut self, name: &str) -> Result<BoolVar, SmtError>;
    fn new_real(&mut self, name: &str) -> Result<RealVar, SmtError>;
    fn new_int(&mut self, name: &str) -> Result<IntVar, SmtError>;
    fn assert(&mut self, e: &Expr) -> Result<(), SmtError>;
    fn push(&mut self) -> Result<(), SmtError>;
    fn pop(&mut self) -> Result<(), SmtError>;
    fn check(&mut self) -> Result<SatResult, SmtError>;
    fn real_values(&mut self, vars: &[RealVar]) -> Result<Vec<f64>, SmtError>;
    fn int_value(&mut self, v: IntVar) -> Result<i64, SmtError>;
    fn bool_value(&mut self, v: BoolVar) -> Result<bool, SmtError>;
    /// Current assertion-stack depth.
    fn depth(&self) -> usize;
    fn backend_name(&self) -> &'static str;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Backend {
    Embedded,
    SmtLib { program: PathBuf, args: Vec<String> },
}

impl Backend {
    /// External backend for a solver binary; arguments are chosen from the
    /// binary name (z3 and cvc5 are recognized, others get none).
    pub fn smtlib(program: impl Into<PathBuf>) -> Backend {
        let program = program.into();
        let stem = program.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        let args: Vec<String> = if stem.starts_with("z3") {
            vec!["-in".into(), "-smt2".into()]
        } else if stem.starts_with("cvc5") {
            vec!["--incremental".into(), "--produce-models".into(), "--lang=smt2".into()]
        } else {
            Vec::new()
        };
        Backend::SmtLib { program, args }
    }

    /// Parses `embedded`, `smtlib` (solver from the environment or PATH) or
    /// `smtlib:<path>`.
    pub fn parse(text: &str) -> Result<Backend, SmtError> {
        match text {
            "embedded" => Ok(Backend::Embedded),
            "smtlib" => find_solver_binary()
                .map(Backend::smtlib)
                .ok_or_else(|| SmtError::Spawn(format!("no SMT solver found; set {SOLVER_ENV}"))),
            other => match other.strip_prefix("smtlib:") {
                Some(path) => Ok(Backend::smtlib(path)),
                None => Err(SmtError::Spawn(format!("unknown backend {other:?}"))),
            },
        }
    }

    pub fn open(&self) -> Result<Box<dyn Solver>, SmtError> {
        match self {
            Backend::Embedded => Ok(Box::new(EmbeddedSolver::new())),
            Backend::SmtLib { program, args } => {
                let p = program.to_string_lossy().into_owned();
                Ok(Box::new(SmtLibProcess::spawn(&p, args)?))
            }
        }
    }
}

/// Solver binary from [`SOLVER_ENV`], else `z3` or `cvc5` on `PATH`.
pub fn find_solver_binary() -> Option<PathBuf> {
    if let Some(p) = std::env::var_os(SOLVER_ENV) {
        let p = PathBuf::from(p);
        if p.is_file() {
            return Some(p);
        }
    }
    let path = std::env::var_os("PATH")?;
    for dir in std::env::split_paths(&path) {
        for name in ["z3", "cvc5"] {
            let cand = Path::new(&dir).join(name);
            if cand.is_file() {
                return Some(cand);
            }
        }
    }
    None
}
