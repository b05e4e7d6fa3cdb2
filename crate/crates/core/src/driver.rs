//! Counterexample-guided synthesis loop over increasing plan lengths.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use stl_synth_smt::Backend;

use crate::abstraction::DiscretePlan;
use crate::encoding::{Counterexample, DiscretePlanner, DplanOutcome, EncodingError};
use crate::feasibility::{feas, FeasError, FeasOptions, StretchedPrefix};
use crate::linsys::{GainSchedule, LinSysError, LinearSystem, Run};
use crate::robust::{plan_robustness, rob, RobustError, RobustOptions};
use crate::stl::{formula_bound, robustness_on, StlFormula, Trace};

#[derive(Clone, Debug)]
pub struct SynthesisConfig {
    pub formula: StlFormula,
    pub system: LinearSystem,
    pub x_init: DVector<f64>,
    /// Dynamics tolerance `δ`.
    pub delta: f64,
    pub qf: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// Largest plan length; defaults to the formula horizon.
    pub k_max: Option<usize>,
    pub backend: Backend,
    /// Robustness gain required to keep a stretch; defaults to `δ`.
    pub eps_rob: Option<f64>,
    pub feas: FeasOptions,
}

impl SynthesisConfig {
    /// Defaults: `δ = 1e-6`, `Q_f = 10 I`, `Q = I`, `R = I`, embedded solver.
    pub fn new(formula: StlFormula, system: LinearSystem, x_init: DVector<f64>) -> Self {
        let (n, m) = (system.n(), system.m());
        SynthesisConfig {
            formula,
            system,
            x_init,
            delta: 1e-6,
            qf: DMatrix::identity(n, n) * 10.0,
            q: DMatrix::identity(n, n),
            r: DMatrix::identity(m, m),
            k_max: None,
            backend: Backend::Embedded,
            eps_rob: None,
            feas: FeasOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Satisfied,
    /// No discrete plan exists up to `K_max`.
    Unsatisfiable,
    /// Discrete plans existed but none was dynamically feasible.
    InfeasibleDynamics,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceEvent {
    Plan { k: usize, sat: bool },
    Feasibility {
        k: usize,
        feasible: bool,
        stretches: Vec<usize>,
        failed_segment: Option<usize>,
        /// `ρ̄` of the feasibility run; `-inf` when infeasible.
        plan_robustness: f64,
    },
    Robustness { k: usize, plan_robustness: f64, robustness: f64 },
}

#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    pub k_reached: usize,
    pub smt_calls: usize,
    pub lp_calls: usize,
    pub bool_vars: usize,
    pub wall_time: Duration,
    pub trace: Vec<TraceEvent>,
}

#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub status: Status,
    /// Nominal run on the stretched plan, `K'+1` samples.
    pub run: Option<Run>,
    /// Plan with the final stretches.
    pub plan: Option<DiscretePlan>,
    pub prefix: Option<StretchedPrefix>,
    pub gains: Option<GainSchedule>,
    /// Stretched loop index `L'`; `None` without a loop.
    pub loop_index: Option<usize>,
    /// `ρ̄` recomputed on the nominal run.
    pub plan_robustness: f64,
    /// `ρ_φ` of the nominal run (unrolled along its loop) at time 0.
    pub robustness: f64,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, thiserror::Error)]
pub enum SynthesisError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Feas(#[from] FeasError),
    #[error(transparent)]
    Robust(#[from] RobustError),
    #[error(transparent)]
    LinSys(#[from] LinSysError),
}

/// Robustness at 0 of a run whose last sample closes onto `loop_index - 1`;
/// loop-free runs are evaluated as finite.
pub fn run_robustness(f: &StlFormula, run: &Run, loop_index: Option<usize>) -> f64 {
    let full = unrolled(f, run, loop_index);
    robustness_on(f, &full.points(), run.ts, Trace::Finite { len: full.len() }, 0)
}

/// The nominal run unrolled along its loop to cover the formula horizon.
pub fn unrolled(f: &StlFormula, run: &Run, loop_index: Option<usize>) -> Run {
    match loop_index {
        Some(_) => {
            let len = (run.len() - 1).max(formula_bound(f, run.ts)) + 1;
            run.unroll_loop(loop_index, len)
        }
        None => run.clone(),
    }
}

fn validate(cfg: &SynthesisConfig) -> Result<(), SynthesisError> {
    let sys = &cfg.system;
    cfg.formula.validate(sys.n() + sys.m()).map_err(SynthesisError::Config)?;
    if cfg.x_init.len() != sys.n() {
        return Err(SynthesisError::Config(format!("x_init has {} entries, expected {}", cfg.x_init.len(), sys.n())));
    }
    if !(cfg.delta > 0.0 && cfg.delta.is_finite()) {
        return Err(SynthesisError::Config("δ must be positive".into()));
    }
    crate::linsys::riccati(sys, &cfg.qf, &cfg.q, &cfg.r, 0)?;
    Ok(())
}

/// Alternates discrete planning, feasibility search and robustness
/// maximization, deepening `K` whenever no plan exists at the current depth.
pub fn synthesize(cfg: &SynthesisConfig) -> Result<SynthesisResult, SynthesisError> {
    validate(cfg)?;
    let start = Instant::now();
    let f = &cfg.formula;
    let sys = &cfg.system;
    let x_init: Vec<f64> = cfg.x_init.iter().copied().collect();
    let bound = formula_bound(f, sys.ts);
    let k_max = cfg.k_max.unwrap_or(bound);
    let mut planner = DiscretePlanner::new(&cfg.backend, f, sys, &x_init)?;
    let mut diag = Diagnostics::default();
    let mut pending: Vec<Counterexample> = Vec::new();
    let mut any_plan = false;
    let mut k = 0;
    let rob_opts = RobustOptions {
        eps: cfg.eps_rob.unwrap_or(cfg.delta),
        qf: cfg.qf.clone(),
        q: cfg.q.clone(),
        r: cfg.r.clone(),
    };

    while k <= k_max {
        diag.k_reached = k;
        let outcome = planner.dplan(k, &pending)?;
        pending.clear();
        diag.smt_calls += 1;
        let plan = match outcome {
            DplanOutcome::Unsat => {
                diag.trace.push(TraceEvent::Plan { k, sat: false });
                log::info!("K = {k}: no discrete plan");
                k += 1;
                continue;
            }
            DplanOutcome::Sat(plan) => plan,
        };
        diag.trace.push(TraceEvent::Plan { k, sat: true });
        any_plan = true;
        log::info!("K = {k}: plan with L = {}", plan.loop_index);

        let fr = feas(f, &plan, sys, &x_init, cfg.delta, &cfg.feas)?;
        diag.lp_calls += fr.lp_calls;
        let feas_rho = match (&fr.prefix, &fr.run) {
            (Some(p), Some(r)) => plan_robustness(p, r)?,
            _ => f64::NEG_INFINITY,
        };
        diag.trace.push(TraceEvent::Feasibility {
            k,
            feasible: fr.feasible,
            stretches: fr.stretches.clone(),
            failed_segment: fr.failed_segment,
            plan_robustness: feas_rho,
        });
        if !fr.feasible {
            log::info!("K = {k}: infeasible at segment {:?}", fr.failed_segment);
            pending = fr.cexs;
            continue;
        }

        let ro = rob(f, &plan, &fr.stretches, sys, &x_init, cfg.delta, &rob_opts, fr.run.as_ref())?;
        diag.lp_calls += ro.lp_calls;
        let loop_index = plan.has_loop().then_some(ro.loop_index);
        let rho = run_robustness(f, &ro.run, loop_index);
        let rho_bar = plan_robustness(&ro.prefix, &ro.run)?;
        diag.trace.push(TraceEvent::Robustness { k, plan_robustness: rho_bar, robustness: rho });
        log::info!("K = {k}: ρ̄ = {rho_bar:.6}, ρ = {rho:.6}, stretches {:?}", ro.stretches);
        if !(rho > 0.0) {
            pending = vec![Counterexample { steps: plan.steps.clone() }];
            continue;
        }
        diag.smt_calls = planner.session().stats().checks;
        diag.bool_vars = planner.session().stats().bool_vars;
        diag.wall_time = start.elapsed();
        let mut plan = plan;
        plan.stretches = ro.stretches.clone();
        return Ok(SynthesisResult {
            status: Status::Satisfied,
            run: Some(ro.run),
            plan: Some(plan),
            prefix: Some(ro.prefix),
            gains: Some(ro.gains),
            loop_index,
            plan_robustness: rho_bar,
            robustness: rho,
            diagnostics: diag,
        });
    }
    diag.smt_calls = planner.session().stats().checks;
    diag.bool_vars = planner.session().stats().bool_vars;
    diag.wall_time = start.elapsed();
    Ok(SynthesisResult {
        status: if any_plan { Status::InfeasibleDynamics } else { Status::Unsatisfiable },
        run: None,
        plan: None,
        prefix: None,
        gains: None,
        loop_index: None,
        plan_robustness: f64::NEG_INFINITY,
        robustness: f64::NEG_INFINITY,
        diagnostics: diag,
    })
}
