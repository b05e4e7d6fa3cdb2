mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use stl_synth::abstraction::{DiscretePlan, Halfspace, Polyhedron};
use stl_synth::cases::{reach_avoid_formula, reach_avoid_system};
use stl_synth::encoding::{DiscretePlanner, DplanOutcome};
use stl_synth::feasibility::{build_prefix, feas, FeasOptions, StretchedPrefix};
use stl_synth::linsys::{lqr_gains, LinearSystem, Run};
use stl_synth::robust::{plan_robustness, rob, robust_lp, RobustOptions};
use stl_synth::stl::{CoarseRun, StlFormula};

const DELTA: f64 = 1e-6;

fn opts(n: usize, m: usize) -> RobustOptions {
    RobustOptions { eps: DELTA, qf: DMatrix::identity(n, n) * 10.0, q: DMatrix::identity(n, n), r: DMatrix::identity(m, m) }
}

fn xy_box(lo: [f64; 2], hi: [f64; 2], dim: usize) -> Polyhedron {
    let mut facets = Vec::new();
    for a in 0..2 {
        let mut c = vec![0.0; dim];
        c[a] = 1.0;
        facets.push(Halfspace::new(c.clone(), -lo[a]));
        c[a] = -1.0;
        facets.push(Halfspace::new(c, hi[a]));
    }
    Polyhedron::from_facets(facets)
}

fn prefix(polys: Vec<Polyhedron>) -> StretchedPrefix {
    let n = polys.len();
    StretchedPrefix { polyhedra: polys, segment_map: (0..n).collect(), positions: (0..n).collect(), segment: n - 1, loop_index: None }
}

fn run_of(xs: &[[f64; 2]]) -> Run {
    Run { states: xs.iter().map(|x| DVector::from_vec(x.to_vec())).collect(), inputs: vec![DVector::zeros(2); xs.len()], ts: 1.0 }
}

/// First discrete plan of a configuration together with its feasibility result.
fn feasible_plan(cfg: &stl_synth::SynthesisConfig, max_k: usize) -> Option<(DiscretePlan, stl_synth::feasibility::FeasResult)> {
    let x0: Vec<f64> = cfg.x_init.iter().copied().collect();
    let mut planner = DiscretePlanner::new(&cfg.backend, &cfg.formula, &cfg.system, &x0).unwrap();
    for k in 0..=max_k {
        if let DplanOutcome::Sat(plan) = planner.dplan(k, &[]).unwrap() {
            let r = feas(&cfg.formula, &plan, &cfg.system, &x0, cfg.delta, &FeasOptions::default()).unwrap();
            return r.feasible.then_some((plan, r));
        }
    }
    None
}

#[test]
fn plan_robustness_examples() {
    let b = xy_box([0.0, 0.0], [10.0, 10.0], 4);
    assert_eq!(plan_robustness(&prefix(vec![b.clone()]), &run_of(&[[5.0, 5.0]])).unwrap(), 5.0);
    let p = prefix(vec![b.clone(), b]);
    assert_eq!(plan_robustness(&p, &run_of(&[[5.0, 5.0], [2.0, 5.0]])).unwrap(), 2.0);
    assert!(plan_robustness(&p, &run_of(&[[5.0, 5.0]])).is_err());
    assert_eq!(plan_robustness(&prefix(vec![Polyhedron::whole()]), &run_of(&[[0.0, 0.0]])).unwrap(), f64::INFINITY);
}

#[test]
fn static_system_sits_at_box_center() {
    let sys = LinearSystem::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 1), 1.0).unwrap();
    let b = xy_box([0.0, 0.0], [10.0, 4.0], 3);
    let (run, rho) = robust_lp(&prefix(vec![b.clone(), b.clone(), b]), &sys, &[5.0, 2.0], DELTA).unwrap();
    assert!((rho - 2.0).abs() < 1e-6, "{rho}");
    for x in &run.states {
        assert!((x - DVector::from_vec(vec![5.0, 2.0])).amax() < 1e-6);
    }
}

#[test]
fn static_plan_keeps_its_stretches() {
    let sys = LinearSystem::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 1), 1.0).unwrap();
    let f = StlFormula::always(0.0, 6.0, box2(3, [0.0, 0.0], [10.0, 4.0]));
    let p = vec![5.0, 2.0, 0.0];
    let cr = CoarseRun::new(vec![p.clone(), p.clone(), p.clone(), p], 2, 2, 1.0).unwrap();
    let plan = DiscretePlan::from_coarse_run(&f, cr);
    let o = rob(&f, &plan, &[0, 0], &sys, &[5.0, 2.0], DELTA, &opts(2, 1), None).unwrap();
    assert_eq!(o.stretches, vec![0, 0]);
    assert_eq!(o.history.len(), 1);
    assert!((o.plan_robustness - 2.0).abs() < 1e-6);
    assert_eq!(o.gains.loop_index, Some(2));
}

#[test]
fn reach_avoid_robustness_improves() {
    let cfg = stl_synth::cases::reach_avoid();
    let (plan, fr) = feasible_plan(&cfg, 3).unwrap();
    let f = reach_avoid_formula();
    let sys = reach_avoid_system();
    let feas_rho = plan_robustness(fr.prefix.as_ref().unwrap(), fr.run.as_ref().unwrap()).unwrap();
    let o = rob(&f, &plan, &fr.stretches, &sys, &[5.0, 5.0], DELTA, &opts(2, 2), fr.run.as_ref()).unwrap();
    assert!(o.plan_robustness > feas_rho + 1e-3, "{} vs {feas_rho}", o.plan_robustness);
    let recomputed = plan_robustness(&o.prefix, &o.run).unwrap();
    assert!((recomputed - o.plan_robustness).abs() < 1e-6);
    let kp = o.prefix.k_prime();
    let g = lqr_gains(&sys, &opts(2, 2).qf, &opts(2, 2).q, &opts(2, 2).r, kp).unwrap();
    assert_eq!(o.gains.gains, g.gains);
    assert_eq!(o.gains.loop_index, Some(o.loop_index));
}

proptest! {
    #![proptest_config(cases(24))]

    #[test]
    fn robust_phase_dominates_feasibility(seed in any::<u64>()) {
        let cfg = box_world(seed);
        if let Some((plan, fr)) = feasible_plan(&cfg, 4) {
            let x0: Vec<f64> = cfg.x_init.iter().copied().collect();
            let prefix = fr.prefix.as_ref().unwrap();
            let feas_rho = plan_robustness(prefix, fr.run.as_ref().unwrap()).unwrap();
            let (run, t) = robust_lp(prefix, &cfg.system, &x0, cfg.delta).unwrap();
            let rho = plan_robustness(prefix, &run).unwrap();
            prop_assert!((t - rho).abs() <= 1e-6 * (1.0 + rho.abs()), "t {} vs {}", t, rho);
            prop_assert!(t >= feas_rho - 1e-6, "robust {} < feasible {}", t, feas_rho);

            let o = rob(&cfg.formula, &plan, &fr.stretches, &cfg.system, &x0, cfg.delta, &opts(2, 2), fr.run.as_ref()).unwrap();
            prop_assert!(o.history.windows(2).all(|w| w[1] - w[0] >= DELTA));
            prop_assert!(o.plan_robustness >= t - 1e-6);
            let full = build_prefix(&plan, plan.k(), &o.stretches).unwrap();
            prop_assert_eq!(&full, &o.prefix);
            prop_assert!(o.run.max_residual(&cfg.system) <= cfg.delta * (1.0 + 1e-6));
        }
    }
}
