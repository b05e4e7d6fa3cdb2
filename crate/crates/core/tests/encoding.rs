mod common;

use common::*;
use proptest::prelude::*;
use stl_synth::abstraction::Polyhedron;
use stl_synth::cases::{reach_avoid_formula, reach_avoid_system};
use stl_synth::encoding::{Counterexample, DiscretePlanner, DplanOutcome, EncodingError};
use stl_synth::linsys::LinearSystem;
use stl_synth::stl::{coarse_satisfies, formula_bound, Predicate, StlFormula};
use stl_synth_smt::Backend;

fn planner(f: &StlFormula, sys: &LinearSystem, x0: &[f64]) -> DiscretePlanner {
    DiscretePlanner::new(&Backend::Embedded, f, sys, x0).unwrap()
}

/// Booleans the encoding needs at depth `k`: one per node and index, plus
/// one per open occurrence of a temporal node at each later index up to
/// `k + 1`.
fn expected_bools(f: &StlFormula, k: usize) -> usize {
    let mut total = k + 1;
    if let Some(iv) = f.interval() {
        let hi = iv.hi.ceil() as usize;
        total += (0..=k).map(|s| hi.min(k + 1 - s)).sum::<usize>();
    }
    total + f.children().iter().map(|c| expected_bools(c, k)).sum::<usize>()
}

#[test]
fn reach_avoid_plans_at_depth_two() {
    let f = reach_avoid_formula();
    let sys = reach_avoid_system();
    let mut p = planner(&f, &sys, &[5.0, 5.0]);
    assert_eq!(p.dplan(0, &[]).unwrap(), DplanOutcome::Unsat);
    assert_eq!(p.dplan(1, &[]).unwrap(), DplanOutcome::Unsat);
    let DplanOutcome::Sat(plan) = p.dplan(2, &[]).unwrap() else { panic!("no plan at K = 2") };
    assert_eq!(plan.loop_index, 2);
    assert!(plan.steps[2].contains(&[25.0, 5.0, 0.0, 0.0]));
    assert!(coarse_satisfies(&f, &plan.source));

    let mut fresh = planner(&f, &sys, &[5.0, 5.0]);
    assert_eq!(fresh.dplan(0, &[]).unwrap(), DplanOutcome::Unsat);
}

#[test]
fn whole_space_counterexample_blocks_everything() {
    let f = reach_avoid_formula();
    let mut p = planner(&f, &reach_avoid_system(), &[5.0, 5.0]);
    assert!(matches!(p.dplan(2, &[]).unwrap(), DplanOutcome::Sat(_)));
    let whole = Counterexample { steps: vec![Polyhedron::whole()] };
    assert_eq!(p.dplan(2, &[whole]).unwrap(), DplanOutcome::Unsat);
    assert_eq!(p.dplan(3, &[]).unwrap(), DplanOutcome::Unsat);
}

#[test]
fn counterexample_excludes_the_plan_prefix() {
    let f = reach_avoid_formula();
    let mut p = planner(&f, &reach_avoid_system(), &[5.0, 5.0]);
    let DplanOutcome::Sat(plan) = p.dplan(2, &[]).unwrap() else { panic!() };
    let cex = Counterexample { steps: plan.steps[..2].to_vec() };
    match p.dplan(2, std::slice::from_ref(&cex)).unwrap() {
        DplanOutcome::Sat(next) => assert!(!cex.matches(&next.source.points)),
        DplanOutcome::Unsat => {}
    }
}

#[test]
fn protocol_is_enforced() {
    let f = reach_avoid_formula();
    let mut p = planner(&f, &reach_avoid_system(), &[5.0, 5.0]);
    p.dplan(1, &[]).unwrap();
    assert!(matches!(p.dplan(1, &[]), Err(EncodingError::Protocol(_))));
    assert!(matches!(p.dplan(3, &[]), Err(EncodingError::Protocol(_))));
    let cex = Counterexample { steps: vec![Polyhedron::whole()] };
    assert!(matches!(p.dplan(2, &[cex]), Err(EncodingError::Protocol(_))));
    assert!(matches!(
        DiscretePlanner::new(&Backend::Embedded, &f, &reach_avoid_system(), &[5.0]),
        Err(EncodingError::Protocol(_))
    ));
}

#[test]
fn variable_count_matches_tree_walk() {
    let f = reach_avoid_formula();
    let g = StlFormula::always(6.0, 8.0, StlFormula::Pred(Predicate::new(vec![1.0, 0.0, 0.0, 0.0], 0.0)));
    let sys = reach_avoid_system();
    for h in [f, g] {
        let mut inc = planner(&h, &sys, &[5.0, 5.0]);
        for k in 0..=4 {
            inc.dplan(k, &[]).unwrap();
            let mut fresh = planner(&h, &sys, &[5.0, 5.0]);
            fresh.dplan(k, &[]).unwrap();
            let want = expected_bools(&h, k);
            assert_eq!(inc.session().stats().bool_vars, want);
            assert_eq!(fresh.session().stats().bool_vars, want);
            assert!(want <= h.size() * (k + 2) * (k + 1));
        }
    }
}

proptest! {
    #![proptest_config(cases(120))]

    #[test]
    fn models_are_sound(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let inst = plan_instance(&mut rng, 5);
        let mut p = planner(&inst.f, &inst.sys, &inst.x0);
        if let DplanOutcome::Sat(plan) = p.dplan(inst.k, &inst.cexs).unwrap() {
            let cr = &plan.source;
            prop_assert_eq!(cr.k(), inst.k);
            prop_assert_eq!(&cr.points[0][..1], &inst.x0[..]);
            prop_assert!(coarse_satisfies(&inst.f, cr));
            prop_assert!(oracle_coarse(&inst.f, cr, formula_bound(&inst.f, 1.0)));
            for c in &inst.cexs {
                prop_assert!(!c.matches(&cr.points));
            }
            for (k, step) in plan.steps.iter().enumerate() {
                prop_assert!(step.contains(&cr.points[k]));
            }
        }
    }

    #[test]
    fn incremental_agrees_with_fresh(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let inst = plan_instance(&mut rng, 6);
        let mut inc = planner(&inst.f, &inst.sys, &inst.x0);
        for k in 0..=inst.k {
            let a = matches!(inc.dplan(k, &[]).unwrap(), DplanOutcome::Sat(_));
            let mut fresh = planner(&inst.f, &inst.sys, &inst.x0);
            let b = matches!(fresh.dplan(k, &[]).unwrap(), DplanOutcome::Sat(_));
            prop_assert_eq!(a, b, "depth {}", k);
        }
        if !inst.cexs.is_empty() {
            let a = matches!(inc.dplan(inst.k, &inst.cexs).unwrap(), DplanOutcome::Sat(_));
            let mut fresh = planner(&inst.f, &inst.sys, &inst.x0);
            let b = matches!(fresh.dplan(inst.k, &inst.cexs).unwrap(), DplanOutcome::Sat(_));
            prop_assert_eq!(a, b, "with counterexamples");
        }
    }
}

#[test]
fn random_suite_is_not_vacuous() {
    let mut rng = rng(11);
    let mut sat = 0;
    for _ in 0..100 {
        let inst = plan_instance(&mut rng, 5);
        if matches!(planner(&inst.f, &inst.sys, &inst.x0).dplan(inst.k, &inst.cexs).unwrap(), DplanOutcome::Sat(_)) {
            sat += 1;
        }
    }
    eprintln!("{sat}/100 satisfiable");
    assert!(sat >= 20, "{sat}");
}

/// Runs only when an external solver is available.
#[test]
fn external_backend_agrees_with_embedded() {
    let Some(bin) = stl_synth_smt::find_solver_binary() else {
        eprintln!("no external solver found, skipping");
        return;
    };
    let ext = Backend::smtlib(bin);
    let f = reach_avoid_formula();
    let sys = reach_avoid_system();
    let mut p = DiscretePlanner::new(&ext, &f, &sys, &[5.0, 5.0]).unwrap();
    assert_eq!(p.dplan(0, &[]).unwrap(), DplanOutcome::Unsat);
    assert_eq!(p.dplan(1, &[]).unwrap(), DplanOutcome::Unsat);
    let DplanOutcome::Sat(plan) = p.dplan(2, &[]).unwrap() else { panic!("no plan at K = 2") };
    assert!(coarse_satisfies(&f, &plan.source));

    let mut rng = rng(5);
    for _ in 0..40 {
        let inst = plan_instance(&mut rng, 4);
        let a = planner(&inst.f, &inst.sys, &inst.x0).dplan(inst.k, &inst.cexs).unwrap();
        let mut q = DiscretePlanner::new(&ext, &inst.f, &inst.sys, &inst.x0).unwrap();
        let b = q.dplan(inst.k, &inst.cexs).unwrap();
        assert_eq!(matches!(a, DplanOutcome::Sat(_)), matches!(b, DplanOutcome::Sat(_)));
        if let DplanOutcome::Sat(plan) = b {
            assert!(oracle_coarse(&inst.f, &plan.source, formula_bound(&inst.f, 1.0)));
            assert!(inst.cexs.iter().all(|c| !c.matches(&plan.source.points)));
        }
    }
}
