//! Small linear program builder plus the run variables
//! shared by the feasibility and robustness programs.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use crate::feasibility::StretchedPrefix;
use crate::linsys::{LinearSystem, Run};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("linear program solver: {0}")]
    Solver(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Variable(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Cmp {
    Le,
    Ge,
    Eq,
}

pub(crate) struct Solution {
    x: Vec<f64>,
}

impl Solution {
    pub fn var_value(&self, v: Variable) -> f64 {
        self.x[v.0]
    }
}

/// Linear program in builder form, solved with the Clarabel interior point
/// method. Bounds become rows.
pub(crate) struct Lp {
    maximize: bool,
    obj: Vec<f64>,
    eq: Vec<(Vec<(usize, f64)>, f64)>,
    le: Vec<(Vec<(usize, f64)>, f64)>,
}

impl Lp {
    pub fn new(maximize: bool) -> Self {
        Lp { maximize, obj: Vec::new(), eq: Vec::new(), le: Vec::new() }
    }

    pub fn var(&mut self, obj: f64, lo: f64, hi: f64) -> Variable {
        let j = self.obj.len();
        self.obj.push(if self.maximize { -obj } else { obj });
        if lo == hi {
            self.eq.push((vec![(j, 1.0)], lo));
        } else {
            if lo.is_finite() {
                self.le.push((vec![(j, -1.0)], -lo));
            }
            if hi.is_finite() {
                self.le.push((vec![(j, 1.0)], hi));
            }
        }
        Variable(j)
    }

    pub fn constraint(&mut self, terms: &[(Variable, f64)], op: Cmp, rhs: f64) {
        let row: Vec<(usize, f64)> = terms.iter().filter(|(_, c)| *c != 0.0).map(|(v, c)| (v.0, *c)).collect();
        match op {
            Cmp::Eq => self.eq.push((row, rhs)),
            Cmp::Le => self.le.push((row, rhs)),
            Cmp::Ge => self.le.push((row.into_iter().map(|(j, c)| (j, -c)).collect(), -rhs)),
        }
    }

    pub fn solve(&self) -> Result<Solution, LpError> {
        let n = self.obj.len();
        let m = self.eq.len() + self.le.len();
        let (mut ri, mut ci, mut vals, mut b) = (Vec::new(), Vec::new(), Vec::new(), Vec::with_capacity(m));
        for (i, (row, rhs)) in self.eq.iter().chain(&self.le).enumerate() {
            for &(j, c) in row {
                ri.push(i);
                ci.push(j);
                vals.push(c);
            }
            b.push(*rhs);
        }
        let a = CscMatrix::new_from_triplets(m, n, ri, ci, vals);
        let p = CscMatrix::zeros((n, n));
        let mut cones = Vec::new();
        if !self.eq.is_empty() {
            cones.push(SupportedConeT::ZeroConeT(self.eq.len()));
        }
        if !self.le.is_empty() {
            cones.push(SupportedConeT::NonnegativeConeT(self.le.len()));
        }
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .tol_gap_abs(1e-10)
            .tol_gap_rel(1e-10)
            .tol_feas(1e-10)
            .max_iter(500)
            .build()
            .map_err(|e| LpError::Solver(format!("{e:?}")))?;
        let mut solver =
            DefaultSolver::new(&p, &self.obj, &a, &b, &cones, settings).map_err(|e| LpError::Solver(format!("{e:?}")))?;
        solver.solve();
        match solver.solution.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => Ok(Solution { x: solver.solution.x.clone() }),
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => Err(LpError::Infeasible),
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => Err(LpError::Unbounded),
            s => Err(LpError::Solver(format!("{s:?}"))),
        }
    }
}

/// States and inputs `x_k, u_k` for every position of a prefix, with `x_0`
/// fixed and the loop closure `r_{K'} = r_{L'-1}` when the prefix has one.
pub(crate) struct RunVars {
    pub x: Vec<Vec<Variable>>,
    pub u: Vec<Vec<Variable>>,
}

impl RunVars {
    pub fn new(lp: &mut Lp, prefix: &StretchedPrefix, sys: &LinearSystem, x_init: &[f64]) -> Self {
        let len = prefix.polyhedra.len();
        let free = (f64::NEG_INFINITY, f64::INFINITY);
        let mut x = Vec::with_capacity(len);
        let mut u = Vec::with_capacity(len);
        for k in 0..len {
            x.push(
                (0..sys.n())
                    .map(|i| if k == 0 { lp.var(0.0, x_init[i], x_init[i]) } else { lp.var(0.0, free.0, free.1) })
                    .collect::<Vec<_>>(),
            );
            u.push((0..sys.m()).map(|_| lp.var(0.0, free.0, free.1)).collect::<Vec<_>>());
        }
        let vars = RunVars { x, u };
        if let Some(lp_idx) = prefix.loop_index {
            let (a, b) = (len - 1, lp_idx - 1);
            for (va, vb) in vars.point(a).into_iter().zip(vars.point(b)) {
                lp.constraint(&[(va, 1.0), (vb, -1.0)], Cmp::Eq, 0.0);
            }
        }
        vars
    }

    pub fn point(&self, k: usize) -> Vec<Variable> {
        self.x[k].iter().chain(&self.u[k]).copied().collect()
    }

    /// Terms of `h·r_k`.
    pub fn facet_terms(&self, k: usize, coeffs: &[f64]) -> Vec<(Variable, f64)> {
        self.point(k).into_iter().zip(coeffs.iter().copied()).collect()
    }

    /// Terms of row `i` of `x_{k+1} − Ax_k − Bu_k`.
    pub fn residual_terms(&self, sys: &LinearSystem, k: usize, i: usize) -> Vec<(Variable, f64)> {
        let mut t = vec![(self.x[k + 1][i], 1.0)];
        t.extend((0..sys.n()).map(|j| (self.x[k][j], -sys.a[(i, j)])));
        t.extend((0..sys.m()).map(|j| (self.u[k][j], -sys.b[(i, j)])));
        t
    }

    pub fn run(&self, sol: &Solution, ts: f64) -> Run {
        let vec = |vs: &Vec<Variable>| nalgebra::DVector::from_iterator(vs.len(), vs.iter().map(|v| sol.var_value(*v)));
        Run { states: self.x.iter().map(vec).collect(), inputs: self.u.iter().map(vec).collect(), ts }
    }
}
