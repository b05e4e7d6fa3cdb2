//! Dynamic feasibility of discrete plans: stretched prefixes, the
//! minimum-slack linear program and the stretch search.

use std::collections::HashMap;


use crate::abstraction::{atoms, DiscretePlan, Polyhedron};
use crate::encoding::Counterexample;
use crate::linsys::{LinearSystem, Run};
use crate::lp::{Cmp, Lp, LpError, RunVars};
use crate::stl::{evaluate, formula_bound, Predicate, StlFormula, Trace};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeasError {
    #[error("segment {0} is outside 1..={1}")]
    Segment(usize, usize),
    #[error("stretch vector has {0} entries, plan has {1} segments")]
    Stretches(usize, usize),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// `P_0 H_1^{l_1} P_1 … H_i^{l_i} P_i` where `H_k` is the region between
/// `P_{k-1}` and `P_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct StretchedPrefix {
    pub polyhedra: Vec<Polyhedron>,
    /// Plan segment of each position: 0 for `P_0`, `k` for `H_k` and `P_k`.
    pub segment_map: Vec<usize>,
    /// Position of `P_k`, `k = 0..=i`.
    pub positions: Vec<usize>,
    pub segment: usize,
    /// Stretched loop index `L' = L + Σ_{k<L} l_k`, present only for the full
    /// plan of a looping run.
    pub loop_index: Option<usize>,
}

impl StretchedPrefix {
    /// `K'`, the index of the last position.
    pub fn k_prime(&self) -> usize {
        self.polyhedra.len() - 1
    }
}

/// Stretched loop index `L + Σ_{k=1}^{L-1} l_k`.
pub fn stretched_loop_index(loop_index: usize, l: &[usize]) -> usize {
    loop_index + l.iter().take(loop_index.saturating_sub(1)).sum::<usize>()
}

/// Builds `prefix(P̄, i, l)`; `i = 0` gives `P_0` alone.
pub fn build_prefix(plan: &DiscretePlan, i: usize, l: &[usize]) -> Result<StretchedPrefix, FeasError> {
    let k = plan.k();
    if i > k {
        return Err(FeasError::Segment(i, k));
    }
    if l.len() != k {
        return Err(FeasError::Stretches(l.len(), k));
    }
    let mut polyhedra = vec![plan.steps[0].clone()];
    let mut segment_map = vec![0];
    let mut positions = vec![0];
    for seg in 1..=i {
        for _ in 0..l[seg - 1] {
            polyhedra.push(plan.hulls[seg - 1].clone());
            segment_map.push(seg);
        }
        positions.push(polyhedra.len());
        polyhedra.push(plan.steps[seg].clone());
        segment_map.push(seg);
    }
    let loop_index = (i == k && plan.has_loop()).then(|| stretched_loop_index(plan.loop_index, l));
    Ok(StretchedPrefix { polyhedra, segment_map, positions, segment: i, loop_index })
}

/// Result of the minimum-slack program.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityOutcome {
    /// `s_{K'}`, the largest per-step dynamics residual.
    pub max_slack: f64,
    /// Optimal run, `K'+1` states and inputs; `None` if the constraints
    /// themselves are infeasible.
    pub run: Option<Run>,
    pub feasible: bool,
}

/// Minimizes `Σ s_k` subject to `x_0 = x_init`, `r_k` in the closure of
/// each polyhedron, `‖x_{k+1} − Ax_k − Bu_k‖_∞ ≤ s_{k+1}`, `s_k ≤ s_{K'}` and
/// the loop closure when present.
pub fn feasibility_lp(prefix: &StretchedPrefix, sys: &LinearSystem, x_init: &[f64], delta: f64) -> Result<FeasibilityOutcome, LpError> {
    let mut lp = Lp::new(false);
    let vars = RunVars::new(&mut lp, prefix, sys, x_init);
    let kp = prefix.k_prime();
    for (k, poly) in prefix.polyhedra.iter().enumerate() {
        for h in &poly.facets {
            lp.constraint(&vars.facet_terms(k, &h.coeffs), Cmp::Ge, -h.offset);
        }
    }
    let slack: Vec<_> = (0..kp).map(|_| lp.var(1.0, 0.0, f64::INFINITY)).collect();
    for k in 0..kp {
        for i in 0..sys.n() {
            let mut t = vars.residual_terms(sys, k, i);
            t.push((slack[k], -1.0));
            lp.constraint(&t, Cmp::Le, 0.0);
            let mut t = vars.residual_terms(sys, k, i);
            t.push((slack[k], 1.0));
            lp.constraint(&t, Cmp::Ge, 0.0);
        }
        if k + 1 < kp {
            lp.constraint(&[(slack[k], 1.0), (slack[kp - 1], -1.0)], Cmp::Le, 0.0);
        }
    }
    match lp.solve() {
        Ok(sol) => {
            let max_slack = slack.last().map_or(0.0, |s| sol.var_value(*s).max(0.0));
            Ok(FeasibilityOutcome { max_slack, run: Some(vars.run(&sol, sys.ts)), feasible: max_slack <= delta })
        }
        Err(LpError::Infeasible) => Ok(FeasibilityOutcome { max_slack: f64::INFINITY, run: None, feasible: false }),
        Err(e) => Err(e),
    }
}

/// Evaluates `f` on the full stretched plan by labels: a predicate holds at
/// a position when its halfspace labels the underlying region.
pub struct LabelEvaluator<'a> {
    f: &'a StlFormula,
    plan: &'a DiscretePlan,
    atoms: Vec<Predicate>,
    /// Atom membership of `P_k` (`regions[2k]`) and `H_k` (`regions[2k-1]`).
    regions: Vec<Vec<bool>>,
}

impl<'a> LabelEvaluator<'a> {
    pub fn new(f: &'a StlFormula, plan: &'a DiscretePlan) -> Self {
        let atoms = atoms(f);
        let pts = &plan.source.points;
        let holds = |a: &Predicate, k: usize| a.eval(&pts[k]) > 0.0;
        let mut regions = Vec::new();
        for k in 0..=plan.k() {
            if k > 0 {
                regions.push(atoms.iter().map(|a| holds(a, k - 1) && holds(a, k)).collect());
            }
            regions.push(atoms.iter().map(|a| holds(a, k)).collect());
        }
        LabelEvaluator { f, plan, atoms, regions }
    }

    /// Whether the timing of `prefix(P̄, K, l)` still satisfies `f`.
    pub fn admissible(&self, l: &[usize]) -> bool {
        let mut seq = vec![0usize];
        for (seg, &n) in l.iter().enumerate() {
            seq.extend(std::iter::repeat_n(2 * seg + 1, n));
            seq.push(2 * seg + 2);
        }
        let trace = if self.plan.has_loop() {
            let lp = stretched_loop_index(self.plan.loop_index, l);
            Trace::Lasso { len: seq.len() - 1, loop_start: lp - 1 }
        } else {
            Trace::Finite { len: seq.len() }
        };
        let mut index: HashMap<(usize, bool), Option<usize>> = HashMap::new();
        let atoms = &self.atoms;
        let regions = &self.regions;
        let mut atom = |p: &Predicate, neg: bool, pos: usize| {
            let idx = *index.entry((p as *const Predicate as usize, neg)).or_insert_with(|| {
                let h = if neg { p.negated() } else { p.clone() };
                atoms.iter().position(|a| *a == h)
            });
            match idx {
                Some(i) if regions[seq[pos]][i] => 1.0,
                _ => -1.0,
            }
        };
        evaluate(self.f, trace, self.plan.source.ts, &mut atom)[0] > 0.0
    }
}

/// Largest `l_i` (scanning upward from the current earlier stretches and
/// zero later ones) for which the stretched plan stays admissible; `None`
/// when not even `l_i = 0` is.
pub fn max_stretch(f: &StlFormula, plan: &DiscretePlan, i: usize, l: &[usize]) -> Option<usize> {
    max_stretch_with(&LabelEvaluator::new(f, plan), formula_bound(f, plan.source.ts), i, l)
}

fn max_stretch_with(eval: &LabelEvaluator<'_>, bound: usize, i: usize, l: &[usize]) -> Option<usize> {
    let mut adm = Frontier { upto: -1, closed: false };
    let v = adm.reach(eval, bound, i, l, bound as i64);
    (v >= 0).then_some(v as usize)
}

/// The admissible range `0..=l_max` of one segment, explored only as far as
/// the search needs it.
struct Frontier {
    /// Every value in `0..=upto` is admissible.
    upto: i64,
    /// `upto` is `l_max`.
    closed: bool,
}

impl Frontier {
    /// `min(v, l_max)`, or -1 when `l_i = 0` is already inadmissible.
    fn reach(&mut self, eval: &LabelEvaluator<'_>, bound: usize, i: usize, l: &[usize], v: i64) -> i64 {
        let mut probe = l.to_vec();
        while self.upto < v && !self.closed {
            let next = self.upto + 1;
            probe[i - 1] = next as usize;
            if next as usize <= bound && eval.admissible(&probe) {
                self.upto = next;
            } else {
                self.closed = true;
            }
        }
        self.upto.min(v)
    }
}

#[derive(Clone, Debug)]
pub struct FeasOptions {
    /// Increments of earlier segments tried per segment before giving up.
    pub max_rounds: usize,
    /// Cap on every `l_i` below the formula horizon. `None` keeps the search
    /// complete; a cap trades completeness for smaller programs.
    pub max_stretch: Option<usize>,
}

impl Default for FeasOptions {
    fn default() -> Self {
        FeasOptions { max_rounds: 64, max_stretch: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeasResult {
    pub feasible: bool,
    /// Nominal run on the full stretched plan when feasible.
    pub run: Option<Run>,
    pub stretches: Vec<usize>,
    /// Stretched loop index `L'` (only meaningful with a loop).
    pub loop_index: usize,
    pub prefix: Option<StretchedPrefix>,
    pub max_slack: f64,
    pub cexs: Vec<Counterexample>,
    pub lp_calls: usize,
    /// First segment without a feasible stretch.
    pub failed_segment: Option<usize>,
}

/// Searches for minimal stretches making the plan dynamically feasible.
///
/// Segments are handled in order. For segment `i` the smallest feasible
/// `l_i` in the admissible range `0..=l_max` is found by galloping from 0 and
/// bisecting with ceiling midpoints. If none exists, earlier segments are lengthened one at a
/// time, cycling from `i-1` down to 1, and the search repeats. A segment that
/// stays infeasible ends the search with the prefix `P_0 … P_i` as
/// counterexample.
pub fn feas(
    f: &StlFormula,
    plan: &DiscretePlan,
    sys: &LinearSystem,
    x_init: &[f64],
    delta: f64,
    opts: &FeasOptions,
) -> Result<FeasResult, FeasError> {
    let big_k = plan.k();
    let mut l = vec![0usize; big_k];
    let mut lp_calls = 0;
    let eval = LabelEvaluator::new(f, plan);
    let bound = formula_bound(f, plan.source.ts).min(opts.max_stretch.unwrap_or(usize::MAX));

    let fail = |i: usize, l: Vec<usize>, lp_calls: usize| FeasResult {
        feasible: false,
        run: None,
        loop_index: stretched_loop_index(plan.loop_index, &l),
        stretches: l,
        prefix: None,
        max_slack: f64::INFINITY,
        cexs: vec![Counterexample { steps: plan.steps[..=i].to_vec() }],
        lp_calls,
        failed_segment: Some(i),
    };

    if big_k == 0 {
        let prefix = build_prefix(plan, 0, &l)?;
        let out = feasibility_lp(&prefix, sys, x_init, delta)?;
        if !out.feasible || !eval.admissible(&l) {
            return Ok(fail(0, l, 1));
        }
        return Ok(FeasResult {
            feasible: true,
            run: out.run,
            stretches: l,
            loop_index: plan.loop_index,
            prefix: Some(prefix),
            max_slack: out.max_slack,
            cexs: Vec::new(),
            lp_calls: 1,
            failed_segment: None,
        });
    }

    let mut last: Option<(FeasibilityOutcome, StretchedPrefix)> = None;
    for i in 1..=big_k {
        let mut next_earlier = i - 1;
        let mut rounds = 0;
        loop {
            let mut adm = Frontier { upto: -1, closed: false };
            if adm.reach(&eval, bound, i, &l, 0) < 0 {
                return Ok(fail(i, l, lp_calls));
            }
            let mut found = None;
            let probe = |v: usize, l: &mut Vec<usize>, lp_calls: &mut usize| -> Result<_, FeasError> {
                l[i - 1] = v;
                let prefix = build_prefix(plan, i, l)?;
                let out = feasibility_lp(&prefix, sys, x_init, delta)?;
                *lp_calls += 1;
                log::trace!("segment {i}: l = {l:?}, slack {:.3e}", out.max_slack);
                Ok(out.feasible.then_some((v, out, prefix)))
            };
            // Gallop 0, 2, 6, 14, … for a feasible upper end, then bisect.
            let mut lo = -1i64;
            let mut hi = None;
            let mut step = 1i64;
            loop {
                let v = adm.reach(&eval, bound, i, &l, lo + step);
                if v <= lo {
                    break;
                }
                match probe(v as usize, &mut l, &mut lp_calls)? {
                    Some(hit) => {
                        hi = Some(v - 1);
                        found = Some(hit);
                        break;
                    }
                    None => lo = v,
                }
                step *= 2;
            }
            if let Some(mut hi) = hi {
                while lo < hi {
                    let mid = (lo + hi + 1).div_euclid(2);
                    match probe(mid as usize, &mut l, &mut lp_calls)? {
                        Some(hit) => {
                            hi = mid - 1;
                            found = Some(hit);
                        }
                        None => lo = mid,
                    }
                }
            }
            let l_max = adm.upto;
            if let Some((v, out, prefix)) = found {
                l[i - 1] = v;
                last = Some((out, prefix));
                break;
            }
            l[i - 1] = 0;
            if l_max == 0 || i == 1 || rounds >= opts.max_rounds {
                return Ok(fail(i, l, lp_calls));
            }
            let mut advanced = false;
            for _ in 1..i {
                let j = next_earlier;
                next_earlier = if j == 1 { i - 1 } else { j - 1 };
                l[j - 1] += 1;
                if l[j - 1] <= bound && eval.admissible(&l) {
                    advanced = true;
                    break;
                }
                l[j - 1] -= 1;
            }
            if !advanced {
                return Ok(fail(i, l, lp_calls));
            }
            rounds += 1;
        }
    }
    let (out, prefix) = last.expect("at least one segment");
    Ok(FeasResult {
        feasible: true,
        run: out.run,
        loop_index: stretched_loop_index(plan.loop_index, &l),
        stretches: l,
        prefix: Some(prefix),
        max_slack: out.max_slack,
        cexs: Vec::new(),
        lp_calls,
        failed_segment: None,
    })
}
