//! Plan robustness `ρ̄`, its maximization over runs and over stretches, and
//! the tracking controller for the result.

use nalgebra::DMatrix;

use crate::abstraction::DiscretePlan;
use crate::feasibility::{build_prefix, stretched_loop_index, FeasError, LabelEvaluator, StretchedPrefix};
use crate::linsys::{lqr_gains, GainSchedule, LinSysError, LinearSystem, Run};
use crate::lp::{Cmp, Lp, LpError, RunVars};
use crate::stl::{formula_bound, StlFormula};

/// Upper bound on the epigraph variable of the robustness program.
pub const ROBUST_CAP: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RobustError {
    #[error("run has {0} samples, prefix has {1} positions")]
    Length(usize, usize),
    #[error(transparent)]
    Feas(#[from] FeasError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    LinSys(#[from] LinSysError),
}

/// `ρ̄ = min_k min_{h ∈ P_k} h·r_k + a`; `+inf` when no position has facets.
pub fn plan_robustness(prefix: &StretchedPrefix, run: &Run) -> Result<f64, RobustError> {
    if run.len() != prefix.polyhedra.len() {
        return Err(RobustError::Length(run.len(), prefix.polyhedra.len()));
    }
    let points = run.points();
    Ok(prefix.polyhedra.iter().zip(&points).map(|(p, r)| p.min_slack(r)).fold(f64::INFINITY, f64::min))
}

/// Maximizes `t ≤ h·r_k + a` over all facets and positions subject to
/// `x_0 = x_init`, `Σ_k ‖x_{k+1} − Ax_k − Bu_k‖_∞ ≤ δ` and the loop closure.
/// `t` is capped at [`ROBUST_CAP`]; with no facets at all `+inf` is reported.
pub fn robust_lp(prefix: &StretchedPrefix, sys: &LinearSystem, x_init: &[f64], delta: f64) -> Result<(Run, f64), RobustError> {
    let mut lp = Lp::new(true);
    let vars = RunVars::new(&mut lp, prefix, sys, x_init);
    let t = lp.var(1.0, f64::NEG_INFINITY, ROBUST_CAP);
    let mut any_facet = false;
    for (k, poly) in prefix.polyhedra.iter().enumerate() {
        for h in &poly.facets {
            any_facet = true;
            let mut terms = vars.facet_terms(k, &h.coeffs);
            terms.push((t, -1.0));
            lp.constraint(&terms, Cmp::Ge, -h.offset);
        }
    }
    let kp = prefix.k_prime();
    let err: Vec<_> = (0..kp).map(|_| lp.var(0.0, 0.0, f64::INFINITY)).collect();
    for k in 0..kp {
        for i in 0..sys.n() {
            let mut r = vars.residual_terms(sys, k, i);
            r.push((err[k], -1.0));
            lp.constraint(&r, Cmp::Le, 0.0);
            let mut r = vars.residual_terms(sys, k, i);
            r.push((err[k], 1.0));
            lp.constraint(&r, Cmp::Ge, 0.0);
        }
    }
    if kp > 0 {
        let sum: Vec<_> = err.iter().map(|&e| (e, 1.0)).collect();
        lp.constraint(&sum, Cmp::Le, delta);
    }
    let sol = lp.solve()?;
    let run = vars.run(&sol, sys.ts);
    let rho = if any_facet { sol.var_value(t) } else { f64::INFINITY };
    Ok((run, rho))
}

#[derive(Clone, Debug)]
pub struct RobustOptions {
    /// Smallest robustness gain that keeps an extra stretch step.
    pub eps: f64,
    pub qf: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobustOutcome {
    pub run: Run,
    pub plan_robustness: f64,
    pub stretches: Vec<usize>,
    /// Stretched loop index `L'`.
    pub loop_index: usize,
    pub prefix: StretchedPrefix,
    pub gains: GainSchedule,
    /// `ρ̄` after the initial solve and after each accepted stretch.
    pub history: Vec<f64>,
    pub lp_calls: usize,
}

/// Improves `ρ̄` by lengthening segments one step at a time, keeping a step
/// when the gain is at least `eps` and the timing stays admissible, until a
/// full pass over the segments gains nothing; then designs LQR gains for the
/// final horizon `K'`.
///
/// `fallback` is the feasibility run, used if the first robustness program
/// exceeds its residual budget.
#[allow(clippy::too_many_arguments)]
pub fn rob(
    f: &StlFormula,
    plan: &DiscretePlan,
    l: &[usize],
    sys: &LinearSystem,
    x_init: &[f64],
    delta: f64,
    opts: &RobustOptions,
    fallback: Option<&Run>,
) -> Result<RobustOutcome, RobustError> {
    let big_k = plan.k();
    let mut l = l.to_vec();
    let mut prefix = build_prefix(plan, big_k, &l)?;
    let mut lp_calls = 1;
    let (mut run, mut rho) = match (robust_lp(&prefix, sys, x_init, delta), fallback) {
        (Ok(v), _) => v,
        (Err(RobustError::Lp(LpError::Infeasible)), Some(run)) => {
            log::debug!("robustness program infeasible, keeping the feasibility run");
            (run.clone(), plan_robustness(&prefix, run)?)
        }
        (Err(e), _) => return Err(e),
    };
    let mut history = vec![rho];
    let eval = LabelEvaluator::new(f, plan);
    let bound = formula_bound(f, plan.source.ts);
    loop {
        let mut improved = false;
        for i in 1..=big_k {
            let mut cand = l.clone();
            cand[i - 1] += 1;
            if cand[i - 1] > bound || !eval.admissible(&cand) {
                continue;
            }
            let p = build_prefix(plan, big_k, &cand)?;
            lp_calls += 1;
            let (r, v) = match robust_lp(&p, sys, x_init, delta) {
                Ok(x) => x,
                Err(RobustError::Lp(LpError::Infeasible)) => continue,
                Err(e) => return Err(e),
            };
            if v - rho >= opts.eps {
                log::debug!("stretch {cand:?}: ρ̄ {rho:.6} -> {v:.6}");
                l = cand;
                prefix = p;
                run = r;
                rho = v;
                history.push(rho);
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    let kp = prefix.k_prime();
    let mut gains = lqr_gains(sys, &opts.qf, &opts.q, &opts.r, kp)?;
    if plan.has_loop() {
        gains.loop_index = Some(stretched_loop_index(plan.loop_index, &l));
    }
    Ok(RobustOutcome {
        loop_index: stretched_loop_index(plan.loop_index, &l),
        run,
        plan_robustness: rho,
        stretches: l,
        prefix,
        gains,
        history,
        lp_calls,
    })
}
