//! Shared generators and brute-force oracles for the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use nalgebra::DVector;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stl_synth::abstraction::{abstract_state, DiscretePlan};
use stl_synth::encoding::{Counterexample, DiscretePlanner, DplanOutcome};
use stl_synth::feasibility::{build_prefix, feasibility_lp, stretched_loop_index};
use stl_synth::linsys::LinearSystem;
use stl_synth::stl::{formula_bound, CoarseRun, Interval, Predicate, StlFormula};
use stl_synth::SynthesisConfig;
use stl_synth_smt::Backend;

/// Proptest settings; failing seeds are reported in the panic message, so
/// nothing is persisted.
pub fn cases(n: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config { cases: n, failure_persistence: None, ..Default::default() }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn window(iv: &Interval, ts: f64) -> (usize, usize) {
    ((iv.lo / ts - 1e-9).ceil().max(0.0) as usize, (iv.hi / ts + 1e-9).floor() as usize)
}

/// Textbook recursive robustness on a finite signal; indices past the end
/// are `-inf`.
pub fn oracle_rho(f: &StlFormula, pts: &[Vec<f64>], k: usize, ts: f64) -> f64 {
    rho_memo(f, pts, k, ts, &mut HashMap::new())
}

type Memo = HashMap<(*const StlFormula, usize), f64>;

fn rho_memo(f: &StlFormula, pts: &[Vec<f64>], k: usize, ts: f64, memo: &mut Memo) -> f64 {
    if k >= pts.len() {
        return f64::NEG_INFINITY;
    }
    if let Some(&v) = memo.get(&(f as *const _, k)) {
        return v;
    }
    let v = match f {
        StlFormula::Pred(p) => p.eval(&pts[k]),
        StlFormula::NegPred(p) => -p.eval(&pts[k]),
        StlFormula::And(a, b) => rho_memo(a, pts, k, ts, memo).min(rho_memo(b, pts, k, ts, memo)),
        StlFormula::Or(a, b) => rho_memo(a, pts, k, ts, memo).max(rho_memo(b, pts, k, ts, memo)),
        StlFormula::Always(iv, g) => {
            let (lo, hi) = window(iv, ts);
            (k + lo..=k + hi).map(|j| rho_memo(g, pts, j, ts, memo)).fold(f64::INFINITY, f64::min)
        }
        StlFormula::Eventually(iv, g) => {
            let (lo, hi) = window(iv, ts);
            (k + lo..=k + hi).map(|j| rho_memo(g, pts, j, ts, memo)).fold(f64::NEG_INFINITY, f64::max)
        }
        StlFormula::Until(iv, a, b) => {
            let (lo, hi) = window(iv, ts);
            let mut hold = f64::INFINITY;
            let mut best = f64::NEG_INFINITY;
            for j in k..=k + hi {
                hold = hold.min(rho_memo(a, pts, j, ts, memo));
                if j >= k + lo {
                    best = best.max(hold.min(rho_memo(b, pts, j, ts, memo)));
                }
            }
            best
        }
    };
    memo.insert((f as *const _, k), v);
    v
}

/// Boolean satisfaction with a custom atom test `holds(p, negated, i)`; `len`
/// is the number of positions, beyond which everything is false.
pub fn oracle_sat(f: &StlFormula, len: usize, k: usize, ts: f64, holds: &dyn Fn(&Predicate, bool, usize) -> bool) -> bool {
    if k >= len {
        return false;
    }
    match f {
        StlFormula::Pred(p) => holds(p, false, k),
        StlFormula::NegPred(p) => holds(p, true, k),
        StlFormula::And(a, b) => oracle_sat(a, len, k, ts, holds) && oracle_sat(b, len, k, ts, holds),
        StlFormula::Or(a, b) => oracle_sat(a, len, k, ts, holds) || oracle_sat(b, len, k, ts, holds),
        StlFormula::Always(iv, g) => {
            let (lo, hi) = window(iv, ts);
            (k + lo..=k + hi).all(|j| oracle_sat(g, len, j, ts, holds))
        }
        StlFormula::Eventually(iv, g) => {
            let (lo, hi) = window(iv, ts);
            (k + lo..=k + hi).any(|j| oracle_sat(g, len, j, ts, holds))
        }
        StlFormula::Until(iv, a, b) => {
            let (lo, hi) = window(iv, ts);
            (k + lo..=k + hi).any(|j| oracle_sat(b, len, j, ts, holds) && (k..=j).all(|i| oracle_sat(a, len, i, ts, holds)))
        }
    }
}

/// Plain Boolean satisfaction of strict predicates on a finite signal; a
/// negated predicate holds where the predicate does not.
pub fn oracle_plain(f: &StlFormula, pts: &[Vec<f64>], k: usize, ts: f64) -> bool {
    oracle_sat(f, pts.len(), k, ts, &|p, neg, i| (p.eval(&pts[i]) > 0.0) != neg)
}

/// Point `j` of the infinite sequence described by a coarse run.
pub fn coarse_point(cr: &CoarseRun, j: usize) -> Option<&Vec<f64>> {
    let (k, l) = (cr.k(), cr.loop_index);
    if j <= k + 1 {
        return Some(&cr.points[j]);
    }
    if l > k {
        return None;
    }
    Some(&cr.points[l + (j - l) % (k - l + 1)])
}

/// Coarse satisfaction recomputed on the unrolled sequence: an atom holds
/// at `i` when its halfspace holds strictly at points `i` and `i + 1`. A
/// negated predicate `!(f > 0)` is the halfspace `-f > 0`.
pub fn oracle_coarse(f: &StlFormula, cr: &CoarseRun, horizon: usize) -> bool {
    let len = if cr.loop_index <= cr.k() { horizon + 1 } else { cr.k() + 1 };
    let pts: Vec<Vec<f64>> = (0..=len).map(|j| coarse_point(cr, j).expect("covered").clone()).collect();
    oracle_sat(f, len, 0, cr.ts, &|p, neg, i| {
        let h = if neg { p.negated() } else { p.clone() };
        h.eval(&pts[i]) > 0.0 && h.eval(&pts[i + 1]) > 0.0
    })
}

pub fn random_predicate(rng: &mut ChaCha8Rng, dim: usize) -> Predicate {
    loop {
        let coeffs: Vec<f64> = (0..dim).map(|_| rng.random_range(-2..=2) as f64).collect();
        if coeffs.iter().any(|c| *c != 0.0) {
            return Predicate::new(coeffs, rng.random_range(-3..=3) as f64);
        }
    }
}

/// Random NNF formula of the given depth over `dim` variables with integer
/// interval bounds no larger than `max_hi`; `until` toggles the until
/// operator.
pub fn random_formula(rng: &mut ChaCha8Rng, dim: usize, depth: usize, max_hi: usize, until: bool) -> StlFormula {
    if depth == 0 || rng.random_bool(0.2) {
        let p = random_predicate(rng, dim);
        return if rng.random_bool(0.3) { StlFormula::NegPred(p) } else { StlFormula::Pred(p) };
    }
    let sub = |rng: &mut ChaCha8Rng| random_formula(rng, dim, depth - 1, max_hi, until);
    let iv = |rng: &mut ChaCha8Rng| {
        let hi = rng.random_range(0..=max_hi);
        let lo = rng.random_range(0..=hi);
        (lo as f64, hi as f64)
    };
    let ops = if until { 6 } else { 5 };
    match rng.random_range(0..ops) {
        0 => StlFormula::and(sub(rng), sub(rng)),
        1 => StlFormula::or(sub(rng), sub(rng)),
        2 | 3 => {
            let (a, b) = iv(rng);
            StlFormula::always(a, b, sub(rng))
        }
        4 => {
            let (a, b) = iv(rng);
            StlFormula::eventually(a, b, sub(rng))
        }
        _ => {
            let (a, b) = iv(rng);
            StlFormula::until(a, b, sub(rng), sub(rng))
        }
    }
}

/// Random well-formed coarse run with `K ≤ max_k`, small integer points.
pub fn random_coarse_run(rng: &mut ChaCha8Rng, dim: usize, max_k: usize) -> CoarseRun {
    let k = rng.random_range(0..=max_k);
    let l = rng.random_range(1..=k + 1);
    let mut pts: Vec<Vec<f64>> = (0..k + 2).map(|_| (0..dim).map(|_| rng.random_range(-3..=3) as f64).collect()).collect();
    if l <= k {
        pts[k] = pts[l - 1].clone();
        pts[k + 1] = pts[l].clone();
    }
    CoarseRun::new(pts, dim, l, 1.0).expect("closed by construction")
}

/// Axis-aligned open box `lo < v < hi` over the first two coordinates of a
/// `dim`-dimensional point.
pub fn box2(dim: usize, lo: [f64; 2], hi: [f64; 2]) -> StlFormula {
    let mut parts = Vec::new();
    for axis in 0..2 {
        let mut c = vec![0.0; dim];
        c[axis] = 1.0;
        parts.push(StlFormula::Pred(Predicate::new(c.clone(), -lo[axis])));
        c[axis] = -1.0;
        parts.push(StlFormula::Pred(Predicate::new(c, hi[axis])));
    }
    StlFormula::all(parts)
}

fn random_box(rng: &mut ChaCha8Rng, within: f64, min_w: f64, max_w: f64) -> ([f64; 2], [f64; 2]) {
    let w = [rng.random_range(min_w..max_w), rng.random_range(min_w..max_w)];
    let lo = [rng.random_range(0.0..within - w[0]), rng.random_range(0.0..within - w[1])];
    (lo, [lo[0] + w[0], lo[1] + w[1]])
}

/// Complement of the open box, as a disjunction of closed-out halfspaces
/// `v < lo` or `v > hi` on each of the first two coordinates.
pub fn outside2(dim: usize, lo: [f64; 2], hi: [f64; 2]) -> StlFormula {
    let mut parts = Vec::new();
    for axis in 0..2 {
        let mut c = vec![0.0; dim];
        c[axis] = -1.0;
        parts.push(StlFormula::Pred(Predicate::new(c.clone(), lo[axis])));
        c[axis] = 1.0;
        parts.push(StlFormula::Pred(Predicate::new(c, -hi[axis])));
    }
    StlFormula::any(parts)
}

/// Planar single-integrator world with `|u| < umax` per axis: stay in a
/// 20×20 workspace, reach a random goal box within a window, and either
/// avoid a random obstacle on the way or stay in the goal for a while.
pub fn box_world(seed: u64) -> SynthesisConfig {
    let mut rng = rng(seed);
    let sys = LinearSystem::single_integrator(2, 1.0);
    let dim = 4;
    let inside = |p: [f64; 2], lo: [f64; 2], hi: [f64; 2]| lo[0] <= p[0] && p[0] <= hi[0] && lo[1] <= p[1] && p[1] <= hi[1];
    let (glo, ghi) = random_box(&mut rng, 20.0, 2.0, 6.0);
    let (olo, ohi) = random_box(&mut rng, 20.0, 2.0, 6.0);
    let x0 = loop {
        let p = [rng.random_range(1.0..19.0), rng.random_range(1.0..19.0)];
        if !inside(p, glo, ghi) && !inside(p, olo, ohi) {
            break p;
        }
    };
    let umax = [1.5, 3.0, 5.0][rng.random_range(0..3)];
    let mut bounds = Vec::new();
    for axis in 2..4 {
        let mut c = vec![0.0; dim];
        c[axis] = 1.0;
        bounds.push(StlFormula::Pred(Predicate::new(c.clone(), umax)));
        c[axis] = -1.0;
        bounds.push(StlFormula::Pred(Predicate::new(c, umax)));
    }
    let input = StlFormula::all(bounds);
    let a = rng.random_range(1..=4) as f64;
    let b = a + rng.random_range(2..=8) as f64;
    let horizon = b + rng.random_range(0..=4) as f64;
    let ws = box2(dim, [0.0, 0.0], [20.0, 20.0]);
    let goal = box2(dim, glo, ghi);
    let safe = StlFormula::and(StlFormula::and(ws.clone(), input.clone()), outside2(dim, olo, ohi));
    let f = match rng.random_range(0..3) {
        0 => StlFormula::and(StlFormula::always(0.0, horizon, safe), StlFormula::eventually(a, b, goal)),
        1 => StlFormula::until(a, b, safe, goal),
        _ => StlFormula::and(
            StlFormula::always(0.0, horizon, StlFormula::and(ws, input)),
            StlFormula::eventually(a, b, StlFormula::always(0.0, rng.random_range(1..=3) as f64, goal)),
        ),
    };
    let mut cfg = SynthesisConfig::new(f, sys, DVector::from_vec(x0.to_vec()));
    cfg.k_max = Some(formula_bound(&cfg.formula, 1.0).min(8));
    cfg
}

/// Whether the stretched plan `P_0 H_1^{l_1} P_1 …` still satisfies `f` when
/// an atom holds at a position iff it labels the region there: `P_k` carries
/// the atoms true at `r̃_k`, `H_k` those true at both `r̃_{k-1}` and `r̃_k`.
pub fn oracle_admissible(f: &StlFormula, plan: &DiscretePlan, l: &[usize]) -> bool {
    let pts = &plan.source.points;
    let mut regions: Vec<(usize, usize)> = vec![(0, 0)];
    for (seg, &n) in l.iter().enumerate() {
        regions.extend(std::iter::repeat_n((seg, seg + 1), n));
        regions.push((seg + 1, seg + 1));
    }
    let kp = regions.len() - 1;
    let bound = formula_bound(f, plan.source.ts);
    let (len, seq) = if plan.has_loop() {
        let start = stretched_loop_index(plan.loop_index, l) - 1;
        let period = kp - start;
        let seq: Vec<_> = (0..=bound).map(|j| if j < kp { regions[j] } else { regions[start + (j - start) % period] }).collect();
        (bound + 1, seq)
    } else {
        (kp + 1, regions)
    };
    oracle_sat(f, len, 0, plan.source.ts, &|p, neg, i| {
        let h = if neg { p.negated() } else { p.clone() };
        let (a, b) = seq[i];
        h.eval(&pts[a]) > 0.0 && h.eval(&pts[b]) > 0.0
    })
}

/// Every stretch vector in `0..=cap` per segment that is admissible and
/// whose full stretched plan passes the feasibility program.
pub fn exhaustive_feasible(f: &StlFormula, plan: &DiscretePlan, sys: &LinearSystem, x0: &[f64], delta: f64, cap: usize) -> Vec<Vec<usize>> {
    let k = plan.k();
    let cap = cap.min(formula_bound(f, plan.source.ts));
    let mut out = Vec::new();
    let mut l = vec![0usize; k];
    loop {
        if oracle_admissible(f, plan, &l) {
            let prefix = build_prefix(plan, k, &l).expect("valid stretches");
            if feasibility_lp(&prefix, sys, x0, delta).expect("lp").feasible {
                out.push(l.clone());
            }
        }
        let Some(i) = (0..k).find(|&i| l[i] < cap) else { break };
        l[i] += 1;
        l[..i].iter_mut().for_each(|v| *v = 0);
    }
    out
}

/// A scalar integrator with bounded input that must visit one or two
/// intervals of the line within deadlines, and the first discrete plan with
/// `K ≤ max_k`, if any.
pub struct FeasInstance {
    pub f: StlFormula,
    pub sys: LinearSystem,
    pub x0: Vec<f64>,
    pub plan: DiscretePlan,
}

pub fn feas_instance(seed: u64, max_k: usize) -> Option<FeasInstance> {
    let mut rng = rng(seed);
    let ub = [0.5, 1.0, 1.5, 2.0][rng.random_range(0..4)];
    let bounded = |c: [f64; 2], lo: f64, hi: f64| {
        StlFormula::and(StlFormula::Pred(Predicate::new(c.to_vec(), -lo)), StlFormula::Pred(Predicate::new(c.iter().map(|v| -v).collect(), hi)))
    };
    let mut goals = Vec::new();
    let mut horizon: f64 = 0.0;
    for _ in 0..rng.random_range(1..=2) {
        let d = rng.random_range(1..=6) as f64 * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let a = rng.random_range(0..=3) as f64;
        let b = a + rng.random_range(1..=6) as f64;
        horizon = horizon.max(b);
        goals.push(StlFormula::eventually(a, b, bounded([1.0, 0.0], d - 0.5, d + 0.5)));
    }
    let mut parts = vec![StlFormula::always(0.0, horizon + 2.0, bounded([0.0, 1.0], -ub, ub))];
    parts.extend(goals);
    let f = StlFormula::all(parts);
    let sys = LinearSystem::single_integrator(1, 1.0);
    let x0 = vec![0.0];
    let mut planner = DiscretePlanner::new(&Backend::Embedded, &f, &sys, &x0).expect("planner");
    for k in 0..=max_k {
        if let DplanOutcome::Sat(plan) = planner.dplan(k, &[]).expect("dplan") {
            return Some(FeasInstance { f, sys, x0, plan });
        }
    }
    None
}

pub struct PlanInstance {
    pub f: StlFormula,
    pub sys: LinearSystem,
    pub x0: Vec<f64>,
    pub k: usize,
    pub cexs: Vec<Counterexample>,
}

/// Formula over `(x, u)` of a scalar integrator, a depth and a few random
/// counterexample prefixes built from cells of random points.
pub fn plan_instance(rng: &mut ChaCha8Rng, max_k: usize) -> PlanInstance {
    let f = random_formula(rng, 2, 3, 5, true);
    let x0 = vec![rng.random_range(-3..=3) as f64];
    let mut cexs = Vec::new();
    for _ in 0..rng.random_range(0..=2) {
        let len = rng.random_range(1..=3);
        let steps = (0..len)
            .map(|_| abstract_state(&f, &[rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]))
            .filter(|p| !p.is_whole())
            .collect::<Vec<_>>();
        if !steps.is_empty() {
            cexs.push(Counterexample { steps });
        }
    }
    PlanInstance { f, sys: LinearSystem::single_integrator(1, 1.0), x0, k: rng.random_range(0..=max_k), cexs }
}
