mod common;

use common::*;
use nalgebra::DVector;
use stl_synth::cases::reach_avoid;
use stl_synth::driver::{run_robustness, unrolled, TraceEvent};
use stl_synth::linsys::LinearSystem;
use stl_synth::stl::{formula_bound, parse_formula, robustness};
use stl_synth::{synthesize, Status, SynthesisConfig, SynthesisError, SynthesisResult};

fn check_satisfied(cfg: &SynthesisConfig, res: &SynthesisResult) {
    assert_eq!(res.status, Status::Satisfied);
    let run = res.run.as_ref().unwrap();
    let full = unrolled(&cfg.formula, run, res.loop_index);
    assert!(full.len() > formula_bound(&cfg.formula, cfg.system.ts));
    let rho = robustness(&cfg.formula, &full, 0).unwrap();
    let pts = full.points();
    assert_eq!(rho, oracle_rho(&cfg.formula, &pts, 0, cfg.system.ts));
    assert!(rho > 0.0);
    assert_eq!(rho, res.robustness);
    assert!(oracle_plain(&cfg.formula, &pts, 0, cfg.system.ts));
    assert!(run.max_residual(&cfg.system) <= cfg.delta * (1.0 + 1e-6));
    assert!(res.plan_robustness <= rho + 1e-9);
}

/// `K` never decreases and grows only after an unsatisfiable planning call.
fn check_deepening(trace: &[TraceEvent]) {
    let mut last: Option<(usize, bool)> = None;
    for e in trace {
        if let TraceEvent::Plan { k, sat } = *e {
            if let Some((pk, psat)) = last {
                assert!(k == pk || k == pk + 1, "K went from {pk} to {k}");
                if k == pk + 1 {
                    assert!(!psat, "deepened after a satisfiable plan");
                }
            }
            last = Some((k, sat));
        }
    }
}

#[test]
fn reach_avoid_is_satisfied() {
    let cfg = reach_avoid();
    let res = synthesize(&cfg).unwrap();
    check_satisfied(&cfg, &res);
    let plan = res.plan.as_ref().unwrap();
    assert_eq!(plan.k(), 2);
    assert_eq!(plan.loop_index, 2);
    let run = res.run.as_ref().unwrap();
    assert!(run.states.iter().any(|x| 20.0 < x[0] && x[0] < 30.0 && 0.0 < x[1] && x[1] < 10.0));
    check_deepening(&res.diagnostics.trace);
    assert_eq!(res.diagnostics.k_reached, 2);
    assert!(res.diagnostics.lp_calls > 0);
}

#[test]
fn contradiction_is_unsatisfiable() {
    let sys = LinearSystem::single_integrator(1, 1.0);
    let names = sys.var_names();
    let f = parse_formula("x1 > 0 & !(x1 > 0)", &names).unwrap();
    let res = synthesize(&SynthesisConfig::new(f, sys, DVector::from_vec(vec![0.0]))).unwrap();
    assert_eq!(res.status, Status::Unsatisfiable);
    assert_eq!(res.diagnostics.k_reached, 0);
    assert!(res.run.is_none());
}

#[test]
fn slow_input_is_infeasible_dynamics() {
    let sys = LinearSystem::single_integrator(1, 1.0);
    let f = parse_formula("G[0,5] (-0.1 < u1 < 0.1) & F[0,3] x1 > 10", &sys.var_names()).unwrap();
    let res = synthesize(&SynthesisConfig::new(f, sys, DVector::from_vec(vec![0.0]))).unwrap();
    assert_eq!(res.status, Status::InfeasibleDynamics);
    assert!(res.diagnostics.trace.iter().any(|e| matches!(e, TraceEvent::Feasibility { feasible: false, .. })));
    check_deepening(&res.diagnostics.trace);
}

#[test]
fn configuration_is_validated() {
    let mut cfg = reach_avoid();
    cfg.x_init = DVector::from_vec(vec![5.0]);
    assert!(matches!(synthesize(&cfg), Err(SynthesisError::Config(_))));
    let mut cfg = reach_avoid();
    cfg.delta = 0.0;
    assert!(matches!(synthesize(&cfg), Err(SynthesisError::Config(_))));
    let mut cfg = reach_avoid();
    cfg.r = -cfg.r;
    assert!(synthesize(&cfg).is_err());
}

#[test]
fn synthesis_is_deterministic() {
    let cfg = reach_avoid();
    let (a, b) = (synthesize(&cfg).unwrap(), synthesize(&cfg).unwrap());
    assert_eq!(a.plan, b.plan);
    assert_eq!(a.run, b.run);
    assert_eq!(a.diagnostics.trace, b.diagnostics.trace);
}

#[test]
fn box_worlds_are_sound() {
    let mut sat = 0;
    for seed in 0..20 {
        let cfg = box_world(seed);
        let res = synthesize(&cfg).unwrap();
        check_deepening(&res.diagnostics.trace);
        if res.status == Status::Satisfied {
            check_satisfied(&cfg, &res);
            let loop_rho = run_robustness(&cfg.formula, res.run.as_ref().unwrap(), res.loop_index);
            assert_eq!(loop_rho, res.robustness);
            sat += 1;
        }
    }
    eprintln!("{sat}/20 satisfied");
    assert!(sat >= 10, "{sat}");
}
