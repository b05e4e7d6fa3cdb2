use nalgebra::DVector;

use super::{evaluate, Predicate, StlFormula, Trace};
use crate::linsys::Run;

const CLOSURE_TOL: f64 = 1e-9;

/// Coarse run `r̃_0 … r̃_{K+1}` of concatenated points `(x, u)` with loop index
/// `L`; a loop exists when `L ≤ K`, and then `r̃_K = r̃_{L-1}`, `r̃_{K+1} = r̃_L`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoarseRun {
    pub points: Vec<Vec<f64>>,
    pub state_dim: usize,
    pub loop_index: usize,
    pub ts: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoarseRunError {
    #[error("a coarse run needs at least two points")]
    TooShort,
    #[error("point {0} has the wrong dimension")]
    Dimension(usize),
    #[error("loop index must be at least 1")]
    LoopIndex,
    #[error("loop closure r[K] = r[L-1], r[K+1] = r[L] violated")]
    Closure,
    #[error("cannot unroll to {0} without a loop")]
    NoLoop(usize),
}

impl CoarseRun {
    pub fn new(points: Vec<Vec<f64>>, state_dim: usize, loop_index: usize, ts: f64) -> Result<Self, CoarseRunError> {
        if points.len() < 2 {
            return Err(CoarseRunError::TooShort);
        }
        let dim = points[0].len();
        if dim < state_dim {
            return Err(CoarseRunError::Dimension(0));
        }
        if let Some(i) = points.iter().position(|p| p.len() != dim) {
            return Err(CoarseRunError::Dimension(i));
        }
        if loop_index == 0 {
            return Err(CoarseRunError::LoopIndex);
        }
        let cr = CoarseRun { points, state_dim, loop_index, ts };
        if cr.has_loop() {
            let k = cr.k();
            let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= CLOSURE_TOL * (1.0 + x.abs()));
            if !close(&cr.points[k], &cr.points[loop_index - 1]) || !close(&cr.points[k + 1], &cr.points[loop_index]) {
                return Err(CoarseRunError::Closure);
            }
        }
        Ok(cr)
    }

    pub fn k(&self) -> usize {
        self.points.len() - 2
    }

    pub fn has_loop(&self) -> bool {
        self.loop_index <= self.k()
    }

    fn trace(&self) -> Trace {
        if self.has_loop() {
            Trace::Lasso { len: self.k() + 1, loop_start: self.loop_index }
        } else {
            Trace::Finite { len: self.k() + 1 }
        }
    }
}

fn coarse_atom<'a>(points: &'a [Vec<f64>]) -> impl FnMut(&Predicate, bool, usize) -> f64 + 'a {
    move |p, neg, i| {
        let (a, b) = (p.eval(&points[i]), p.eval(&points[i + 1]));
        let holds = if neg { a < 0.0 && b < 0.0 } else { a > 0.0 && b > 0.0 };
        if holds {
            1.0
        } else {
            -1.0
        }
    }
}

/// `r̃ ⊨^{(K,L)}_0 φ`: a predicate holds at `k` when it holds at both `r̃_k` and
/// `r̃_{k+1}`; with a loop, indices past `K` wrap into `L..=K`.
pub fn coarse_satisfies(f: &StlFormula, cr: &CoarseRun) -> bool {
    evaluate(f, cr.trace(), cr.ts, &mut coarse_atom(&cr.points))[0] > 0.0
}

/// Coarse evaluation at index 0 of a finite point sequence; the last point
/// only serves as successor of the one before it.
pub fn coarse_evaluate(f: &StlFormula, points: &[Vec<f64>], ts: f64) -> bool {
    if points.len() < 2 {
        return false;
    }
    let trace = Trace::Finite { len: points.len() - 1 };
    evaluate(f, trace, ts, &mut coarse_atom(points))[0] > 0.0
}

/// `r̃_0 … r̃_{L-1}` followed by repetitions of `r̃_L … r̃_K`, truncated to
/// `k_prime + 1` points. Without a loop `k_prime` may be at most `K + 1`.
pub fn unroll(cr: &CoarseRun, k_prime: usize) -> Result<Run, CoarseRunError> {
    if !cr.has_loop() && k_prime > cr.k() + 1 {
        return Err(CoarseRunError::NoLoop(k_prime));
    }
    let trace = cr.trace();
    let n = cr.state_dim;
    let (mut states, mut inputs) = (Vec::new(), Vec::new());
    for j in 0..=k_prime {
        let p = if j == cr.k() + 1 && !cr.has_loop() { &cr.points[j] } else { &cr.points[trace.fold(j).unwrap()] };
        states.push(DVector::from_column_slice(&p[..n]));
        inputs.push(DVector::from_column_slice(&p[n..]));
    }
    Ok(Run { states, inputs, ts: cr.ts })
}
