use super::{formula_bound, Predicate, StlFormula};
use crate::linsys::Run;

/// Index structure of a signal: a finite sequence with strong semantics past
/// its end, or a lasso whose positions `loop_start..len` repeat forever.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trace {
    Finite { len: usize },
    Lasso { len: usize, loop_start: usize },
}

impl Trace {
    pub fn len(&self) -> usize {
        match *self {
            Trace::Finite { len } | Trace::Lasso { len, .. } => len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stored position of time index `j`; `None` past the end of a finite trace.
    pub fn fold(&self, j: usize) -> Option<usize> {
        match *self {
            Trace::Finite { len } => (j < len).then_some(j),
            Trace::Lasso { len, loop_start } => {
                if j < len {
                    Some(j)
                } else {
                    Some(loop_start + (j - loop_start) % (len - loop_start))
                }
            }
        }
    }

    fn period(&self) -> Option<(usize, usize)> {
        match *self {
            Trace::Finite { .. } => None,
            Trace::Lasso { len, loop_start } => Some((loop_start, len - loop_start)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("run has {got} samples, the formula needs {needed} from index {k}")]
    TooShort { needed: usize, got: usize, k: usize },
    #[error("formula has dimension {formula}, run points have {run}")]
    Dimension { formula: usize, run: usize },
}

type Atom<'a> = dyn FnMut(&Predicate, bool, usize) -> f64 + 'a;

/// Values of `f` at every stored position of `trace`.
///
/// `atom(p, negated, i)` values a predicate at position `i`. Time indices past
/// a finite end count as `-inf`; with `atom` returning `±1` this is Boolean
/// satisfaction and with signed distances it is robustness.
pub fn evaluate(f: &StlFormula, trace: Trace, ts: f64, atom: &mut Atom<'_>) -> Vec<f64> {
    let n = trace.len();
    match f {
        StlFormula::Pred(p) => (0..n).map(|i| atom(p, false, i)).collect(),
        StlFormula::NegPred(p) => (0..n).map(|i| atom(p, true, i)).collect(),
        StlFormula::And(a, b) | StlFormula::Or(a, b) => {
            let sa = evaluate(a, trace, ts, atom);
            let sb = evaluate(b, trace, ts, atom);
            let and = matches!(f, StlFormula::And(..));
            sa.iter().zip(&sb).map(|(&x, &y)| if and { x.min(y) } else { x.max(y) }).collect()
        }
        StlFormula::Always(iv, g) | StlFormula::Eventually(iv, g) => {
            let s = evaluate(g, trace, ts, atom);
            let (lo, hi) = iv.steps(ts);
            let always = matches!(f, StlFormula::Always(..));
            match trace.period() {
                Some((l, p)) => {
                    let window = |k: usize| {
                        let start = k + lo;
                        (start, (k + hi).min(start.max(l) + p - 1))
                    };
                    let ext_len = (0..n).map(|k| window(k).1 + 1).max().unwrap_or(0);
                    let ext: Vec<f64> = (0..ext_len).map(|j| s[trace.fold(j).expect("lasso")]).collect();
                    sliding(&ext, (0..n).map(window), always)
                }
                None => {
                    let mut out = sliding(&s, (0..n).map(|k| (k + lo, (k + hi).min(n.saturating_sub(1)))), always);
                    if always {
                        for (k, v) in out.iter_mut().enumerate() {
                            if k + hi >= n {
                                *v = f64::NEG_INFINITY;
                            }
                        }
                    }
                    out
                }
            }
        }
        StlFormula::Until(iv, a, b) => {
            let s1 = evaluate(a, trace, ts, atom);
            let s2 = evaluate(b, trace, ts, atom);
            let (lo, hi) = iv.steps(ts);
            (0..n)
                .map(|k| {
                    let (start, mut end) = (k + lo, k + hi);
                    // Past `full` every loop phase is in the running minimum.
                    let mut full = usize::MAX;
                    if let Some((l, p)) = trace.period() {
                        full = k.max(l) + p - 1;
                        end = end.min(start.max(full) + p - 1);
                    }
                    let (mut run_min, mut best) = (f64::INFINITY, f64::NEG_INFINITY);
                    let mut j = k;
                    while j <= end {
                        let Some(i) = trace.fold(j) else { break };
                        run_min = run_min.min(s1[i]);
                        if j >= start {
                            best = best.max(run_min.min(s2[i]));
                        }
                        j = if j >= full && j + 1 < start { start } else { j + 1 };
                    }
                    best
                })
                .collect()
        }
    }
}

/// Minimum (or maximum) of `v` over each window `[start, end]`. Window ends
/// must be nondecreasing; an empty window gives `-inf`.
fn sliding(v: &[f64], windows: impl Iterator<Item = (usize, usize)>, min: bool) -> Vec<f64> {
    let better = |a: f64, b: f64| if min { a <= b } else { a >= b };
    let mut deque = std::collections::VecDeque::new();
    let mut next = 0;
    windows
        .map(|(start, end)| {
            if start > end || start >= v.len() {
                return f64::NEG_INFINITY;
            }
            while next <= end {
                while deque.back().is_some_and(|&b: &usize| better(v[next], v[b])) {
                    deque.pop_back();
                }
                deque.push_back(next);
                next += 1;
            }
            while deque.front().is_some_and(|&f| f < start) {
                deque.pop_front();
            }
            v[*deque.front().expect("non-empty window")]
        })
        .collect()
}

/// Robustness of `f` at index `k` over explicit points on the given trace.
pub fn robustness_on(f: &StlFormula, points: &[Vec<f64>], ts: f64, trace: Trace, k: usize) -> f64 {
    let mut atom = |p: &Predicate, neg: bool, i: usize| {
        let v = p.eval(&points[i]);
        if neg {
            -v
        } else {
            v
        }
    };
    evaluate(f, trace, ts, &mut atom).get(k).copied().unwrap_or(f64::NEG_INFINITY)
}

fn check_run(f: &StlFormula, run: &Run, k: usize) -> Result<Vec<Vec<f64>>, EvalError> {
    let needed = k + formula_bound(f, run.ts) + 1;
    if run.len() < needed {
        return Err(EvalError::TooShort { needed, got: run.len(), k });
    }
    let points = run.points();
    let dim = f.atoms().first().map_or(0, |p| p.dim());
    if let Some(r) = points.first() {
        if dim != 0 && dim != r.len() {
            return Err(EvalError::Dimension { formula: dim, run: r.len() });
        }
    }
    Ok(points)
}

/// Space robustness `ρ_φ(run, t_k)`. The run must cover the formula horizon
/// from `k`; a missing final input counts as zero.
pub fn robustness(f: &StlFormula, run: &Run, k: usize) -> Result<f64, EvalError> {
    let points = check_run(f, run, k)?;
    let trace = Trace::Finite { len: points.len() };
    Ok(robustness_on(f, &points, run.ts, trace, k))
}

/// Boolean satisfaction `run ⊨_k φ` with strict predicates.
pub fn satisfies(f: &StlFormula, run: &Run, k: usize) -> Result<bool, EvalError> {
    let points = check_run(f, run, k)?;
    let mut atom = |p: &Predicate, neg: bool, i: usize| {
        let holds = p.eval(&points[i]) > 0.0;
        if holds != neg {
            1.0
        } else {
            -1.0
        }
    };
    let trace = Trace::Finite { len: points.len() };
    Ok(evaluate(f, trace, run.ts, &mut atom)[k] > 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::Predicate;

    fn x_gt(c: f64) -> StlFormula {
        StlFormula::Pred(Predicate::new(vec![1.0], -c))
    }

    fn pts(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn always_takes_the_window_minimum() {
        let f = StlFormula::always(0.0, 2.0, x_gt(0.0));
        let p = pts(&[1.0, 2.0, 0.5]);
        let r = robustness_on(&f, &p, 1.0, Trace::Finite { len: 3 }, 0);
        assert_eq!(r, 0.5);
    }

    #[test]
    fn finite_traces_are_strong() {
        let f = StlFormula::eventually(0.0, 5.0, x_gt(10.0));
        let p = pts(&[1.0, 2.0]);
        assert_eq!(robustness_on(&f, &p, 1.0, Trace::Finite { len: 2 }, 0), -8.0);
        let g = StlFormula::always(0.0, 5.0, x_gt(0.0));
        assert_eq!(robustness_on(&g, &p, 1.0, Trace::Finite { len: 2 }, 0), f64::NEG_INFINITY);
    }

    #[test]
    fn lasso_matches_unrolled_trace() {
        let f = StlFormula::until(
            3.0,
            40.0,
            x_gt(0.0),
            StlFormula::always(1.0, 7.0, StlFormula::eventually(0.0, 2.0, x_gt(2.5))),
        );
        let base = [1.0, 4.0, 2.0, 3.0, 0.5, 6.0];
        let l = 2;
        let unrolled: Vec<f64> = (0..200).map(|j| if j < 6 { base[j] } else { base[l + (j - l) % 4] }).collect();
        let lasso = Trace::Lasso { len: 6, loop_start: l };
        for k in 0..6 {
            let a = robustness_on(&f, &pts(&base), 1.0, lasso, k);
            let b = robustness_on(&f, &pts(&unrolled), 1.0, Trace::Finite { len: 200 }, k);
            assert_eq!(a, b, "k = {k}");
        }
    }

    #[test]
    fn sampled_windows_round_inward() {
        let iv = crate::stl::Interval::new(0.5, 2.5);
        assert_eq!(iv.steps(1.0), (1, 2));
        assert_eq!(iv.outer_steps(1.0), (0, 3));
        let iv = crate::stl::Interval::new(0.3, 0.9);
        assert_eq!(iv.steps(0.1), (3, 9));
    }
}
