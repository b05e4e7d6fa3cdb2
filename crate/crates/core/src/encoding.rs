//! Discrete planning as an incremental satisfiability problem.
//!
//! The unknowns are the coarse points `r̃_0 … r̃_{K+1}`, the loop index `L`
//! and Booleans `p[φ][k'][k]`: `p[φ][k][k]` asserts that `φ` holds from
//! index `k`, and for a temporal `φ` the chain `p[φ][k'][k]`, `k' > k`, carries
//! the obligations of the occurrence started at `k` that remain at `k'`.
//!
//! Constraints for index `K` are asserted once at the base level; the loop
//! constraints of the current depth live in the single pushed frame and are
//! replaced on every call.

use std::collections::HashMap;

use stl_synth_smt::{Backend, BoolVar, Expr, IntVar, RealVar, Rel, SatResult, SmtError, Solver};

use crate::abstraction::{DiscretePlan, Polyhedron};
use crate::linsys::LinearSystem;
use crate::stl::{CoarseRun, CoarseRunError, Predicate, StlFormula};

#[derive(Debug, thiserror::Error)]
pub enum EncodingError {
    #[error(transparent)]
    Smt(#[from] SmtError),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("solver model is not a coarse run: {0}")]
    Model(#[from] CoarseRunError),
}

#[derive(Clone, Debug)]
enum Kind {
    /// Halfspace that must be positive; negated predicates are stored negated.
    Atom(Predicate),
    And,
    Or,
    Always,
    Eventually,
    Until,
}

#[derive(Clone, Debug)]
struct Node {
    kind: Kind,
    children: Vec<usize>,
    /// `(⌊a/Ts⌋, ⌈b/Ts⌉)` for temporal nodes.
    lo: usize,
    hi: usize,
}

/// Formula tree flattened in pre-order; node 0 is the root.
#[derive(Clone, Debug)]
pub struct FlatFormula {
    nodes: Vec<Node>,
}

impl FlatFormula {
    pub fn new(f: &StlFormula, ts: f64) -> Self {
        let mut flat = FlatFormula { nodes: Vec::new() };
        flat.add(f, ts);
        flat
    }

    fn add(&mut self, f: &StlFormula, ts: f64) -> usize {
        let id = self.nodes.len();
        let (lo, hi) = f.interval().map_or((0, 0), |i| i.outer_steps(ts));
        let kind = match f {
            StlFormula::Pred(p) => Kind::Atom(p.clone()),
            StlFormula::NegPred(p) => Kind::Atom(p.negated()),
            StlFormula::And(..) => Kind::And,
            StlFormula::Or(..) => Kind::Or,
            StlFormula::Always(..) => Kind::Always,
            StlFormula::Eventually(..) => Kind::Eventually,
            StlFormula::Until(..) => Kind::Until,
        };
        self.nodes.push(Node { kind, children: Vec::new(), lo, hi });
        let children: Vec<usize> = f.children().into_iter().map(|c| self.add(c, ts)).collect();
        self.nodes[id].children = children;
        id
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn temporal(&self, id: usize) -> bool {
        matches!(self.nodes[id].kind, Kind::Always | Kind::Eventually | Kind::Until)
    }
}

/// Plan prefix `P_0 … P_i` shown dynamically infeasible; future coarse runs
/// must leave at least one of its polyhedra.
#[derive(Clone, Debug, PartialEq)]
pub struct Counterexample {
    pub steps: Vec<Polyhedron>,
}

impl Counterexample {
    /// Whether the points `r̃_0 … r̃_i` all lie in the prefix (strictly).
    pub fn matches(&self, points: &[Vec<f64>]) -> bool {
        self.steps.iter().zip(points).all(|(p, r)| p.contains(r)) && points.len() >= self.steps.len()
    }
}

pub type CounterexampleSet = Vec<Counterexample>;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SessionStats {
    pub bool_vars: usize,
    pub checks: usize,
    pub assertions: usize,
}

/// Solver state for one formula: variable registry and assertion stack.
pub struct SolverSession {
    solver: Box<dyn Solver>,
    flat: FlatFormula,
    dim: usize,
    state_dim: usize,
    ts: f64,
    points: Vec<Vec<RealVar>>,
    loop_var: IntVar,
    diag: Vec<Vec<BoolVar>>,
    chain: HashMap<(usize, usize, usize), BoolVar>,
    stats: SessionStats,
}

impl SolverSession {
    pub fn new(backend: &Backend, f: &StlFormula, ts: f64, state_dim: usize, input_dim: usize) -> Result<Self, EncodingError> {
        let mut solver = backend.open()?;
        let loop_var = solver.new_int("L")?;
        let flat = FlatFormula::new(f, ts);
        Ok(SolverSession {
            solver,
            diag: vec![Vec::new(); flat.len()],
            flat,
            dim: state_dim + input_dim,
            state_dim,
            ts,
            points: Vec::new(),
            loop_var,
            chain: HashMap::new(),
            stats: SessionStats::default(),
        })
    }

    pub fn stats(&self) -> &SessionStats {
        &self.stats
    }

    pub fn depth(&self) -> usize {
        self.solver.depth()
    }

    pub fn backend_name(&self) -> &'static str {
        self.solver.backend_name()
    }

    fn point(&mut self, k: usize) -> Result<Vec<RealVar>, EncodingError> {
        while self.points.len() <= k {
            let idx = self.points.len();
            let vars = (0..self.dim).map(|i| self.solver.new_real(&format!("r{idx}_{i}"))).collect::<Result<_, _>>()?;
            self.points.push(vars);
        }
        Ok(self.points[k].clone())
    }

    fn diag_var(&mut self, node: usize, k: usize) -> Result<BoolVar, EncodingError> {
        while self.diag[node].len() <= k {
            let idx = self.diag[node].len();
            let v = self.solver.new_bool(&format!("p{node}_{idx}_{idx}"))?;
            self.stats.bool_vars += 1;
            self.diag[node].push(v);
        }
        Ok(self.diag[node][k])
    }

    /// `p[node][kp][k]`; the diagonal when `kp == k`.
    fn chain_var(&mut self, node: usize, kp: usize, k: usize) -> Result<BoolVar, EncodingError> {
        if kp == k {
            return self.diag_var(node, k);
        }
        if let Some(&v) = self.chain.get(&(node, kp, k)) {
            return Ok(v);
        }
        let v = self.solver.new_bool(&format!("p{node}_{kp}_{k}"))?;
        self.stats.bool_vars += 1;
        self.chain.insert((node, kp, k), v);
        Ok(v)
    }

    fn assert(&mut self, e: Expr) -> Result<(), EncodingError> {
        if e != Expr::True {
            self.stats.assertions += 1;
            self.solver.assert(&e)?;
        }
        Ok(())
    }

    fn halfspace(&mut self, coeffs: &[f64], offset: f64, k: usize, rel: Rel) -> Result<Expr, EncodingError> {
        let vars = self.point(k)?;
        let terms = vars.iter().zip(coeffs).filter(|(_, c)| **c != 0.0).map(|(v, c)| (*v, *c)).collect();
        Ok(Expr::lin(terms, offset, rel))
    }

    /// `C_φ`: the root holds at 0, `L > 0` and `x_0 = x_init`.
    pub fn encode_root(&mut self, x_init: &[f64]) -> Result<(), EncodingError> {
        let root = self.diag_var(0, 0)?;
        self.assert(Expr::Bool(root))?;
        self.assert(Expr::int(self.loop_var, Rel::Gt, 0))?;
        let r0 = self.point(0)?;
        for (v, x) in r0.iter().zip(x_init) {
            self.assert(Expr::lin(vec![(*v, 1.0)], -x, Rel::Eq))?;
        }
        Ok(())
    }

    /// Constraints of every occurrence whose obligations reach index `kp`.
    pub fn encode_step(&mut self, kp: usize) -> Result<(), EncodingError> {
        for id in 0..self.flat.len() {
            let node = self.flat.nodes[id].clone();
            if !self.flat.temporal(id) {
                let p = Expr::Bool(self.diag_var(id, kp)?);
                let body = match &node.kind {
                    Kind::Atom(a) => {
                        let now = self.halfspace(&a.coeffs, a.offset, kp, Rel::Gt)?;
                        let next = self.halfspace(&a.coeffs, a.offset, kp + 1, Rel::Gt)?;
                        Expr::and(vec![now, next])
                    }
                    Kind::And | Kind::Or => {
                        let cs = node.children.iter().map(|&c| self.diag_var(c, kp).map(Expr::Bool)).collect::<Result<Vec<_>, _>>()?;
                        if matches!(node.kind, Kind::And) {
                            Expr::and(cs)
                        } else {
                            Expr::or(cs)
                        }
                    }
                    _ => unreachable!(),
                };
                self.assert(Expr::implies(p, body))?;
                continue;
            }
            for k in kp.saturating_sub(node.hi)..=kp {
                let (a_hat, b_hat) = (k + node.lo, k + node.hi);
                let c = Expr::Bool(self.chain_var(id, kp, k)?);
                let next = if kp < b_hat { Some(Expr::Bool(self.chain_var(id, kp + 1, k)?)) } else { None };
                let inside = a_hat < kp && kp < b_hat;
                let body = match node.kind {
                    Kind::Always => {
                        let mut conj = Vec::new();
                        if kp >= a_hat {
                            conj.push(Expr::Bool(self.diag_var(node.children[0], kp)?));
                        }
                        conj.extend(next);
                        Expr::and(conj)
                    }
                    Kind::Eventually => {
                        let mut disj = Vec::new();
                        if inside {
                            disj.push(Expr::Bool(self.diag_var(node.children[0], kp)?));
                        }
                        disj.extend(next);
                        Expr::or(disj)
                    }
                    Kind::Until => {
                        let hold = Expr::Bool(self.diag_var(node.children[0], kp)?);
                        let mut disj = Vec::new();
                        if inside {
                            disj.push(Expr::Bool(self.diag_var(node.children[1], kp)?));
                        }
                        disj.extend(next);
                        Expr::and(vec![hold, Expr::or(disj)])
                    }
                    _ => unreachable!(),
                };
                self.assert(Expr::implies(c, body))?;
            }
        }
        Ok(())
    }

    /// `C_{K,loop}`: closure of the loop and the obligations left at `K+1`.
    pub fn encode_loop(&mut self, k_cap: usize) -> Result<(), EncodingError> {
        let big_k = k_cap;
        let rk = self.point(big_k)?;
        let rk1 = self.point(big_k + 1)?;
        for l in 1..=big_k {
            let (a, b) = (self.point(l - 1)?, self.point(l)?);
            let mut eqs = Vec::new();
            for i in 0..self.dim {
                eqs.push(Expr::lin(vec![(rk[i], 1.0), (a[i], -1.0)], 0.0, Rel::Eq));
                eqs.push(Expr::lin(vec![(rk1[i], 1.0), (b[i], -1.0)], 0.0, Rel::Eq));
            }
            let sel = Expr::int(self.loop_var, Rel::Eq, l as i64);
            self.assert(Expr::implies(sel, Expr::and(eqs)))?;
        }
        for id in 0..self.flat.len() {
            if !self.flat.temporal(id) {
                continue;
            }
            let node = self.flat.nodes[id].clone();
            for k in (big_k + 1).saturating_sub(node.hi)..=big_k {
                let c = Expr::Bool(self.chain_var(id, big_k + 1, k)?);
                let mut parts = vec![Expr::int(self.loop_var, Rel::Le, big_k as i64)];
                for l in 1..=big_k {
                    let obl = self.loop_obligation(&node, k, big_k, l)?;
                    parts.push(Expr::implies(Expr::int(self.loop_var, Rel::Eq, l as i64), obl));
                }
                self.assert(Expr::implies(c, Expr::and(parts)))?;
            }
        }
        Ok(())
    }

    /// What an occurrence started at `k` still requires from index `K+1` on
    /// when the run loops back to `l`.
    fn loop_obligation(&mut self, node: &Node, k: usize, big_k: usize, l: usize) -> Result<Expr, EncodingError> {
        let p = big_k - l + 1;
        let fold = |j: usize| if j <= big_k { j } else { l + (j - l) % p };
        let (a_hat, b_hat) = (k + node.lo, k + node.hi);
        let first = big_k + 1;
        match node.kind {
            Kind::Always => {
                let s = a_hat.max(first);
                let e = b_hat.min(s + p - 1);
                let conj = (s..=e).map(|j| self.diag_var(node.children[0], fold(j)).map(Expr::Bool)).collect::<Result<Vec<_>, _>>()?;
                Ok(Expr::and(conj))
            }
            Kind::Eventually => {
                let s = (a_hat + 1).max(first);
                let e = (b_hat.saturating_sub(1)).min(s + p - 1);
                let disj = (s..=e).map(|j| self.diag_var(node.children[0], fold(j)).map(Expr::Bool)).collect::<Result<Vec<_>, _>>()?;
                Ok(Expr::or(disj))
            }
            Kind::Until => {
                let s = (a_hat + 1).max(first);
                let full = big_k + p;
                let e = (b_hat.saturating_sub(1)).min(s.max(full) + p - 1);
                let mut disj = Vec::new();
                for j in s..=e {
                    let mut conj = vec![Expr::Bool(self.diag_var(node.children[1], fold(j))?)];
                    for i in first..=j.min(full) {
                        conj.push(Expr::Bool(self.diag_var(node.children[0], fold(i))?));
                    }
                    disj.push(Expr::and(conj));
                }
                Ok(Expr::or(disj))
            }
            _ => unreachable!(),
        }
    }

    /// `C_cex`: each counterexample prefix is left at some index.
    pub fn encode_cex(&mut self, cexs: &[Counterexample]) -> Result<(), EncodingError> {
        for cex in cexs {
            let mut escape = Vec::new();
            for (k, poly) in cex.steps.iter().enumerate() {
                for h in &poly.facets {
                    escape.push(self.halfspace(&h.coeffs, h.offset, k, Rel::Le)?);
                }
            }
            self.assert(Expr::or(escape))?;
        }
        Ok(())
    }

    pub fn push(&mut self) -> Result<(), EncodingError> {
        Ok(self.solver.push()?)
    }

    pub fn pop(&mut self) -> Result<(), EncodingError> {
        Ok(self.solver.pop()?)
    }

    pub fn check(&mut self) -> Result<SatResult, EncodingError> {
        self.stats.checks += 1;
        Ok(self.solver.check()?)
    }

    /// Coarse run `r̃_0 … r̃_{K+1}` and `L` of the last satisfying model.
    pub fn extract(&mut self, big_k: usize) -> Result<CoarseRun, EncodingError> {
        let vars: Vec<RealVar> = (0..=big_k + 1).flat_map(|k| self.points[k].clone()).collect();
        let vals = self.solver.real_values(&vars)?;
        let points: Vec<Vec<f64>> = vals.chunks(self.dim).map(|c| c.to_vec()).collect();
        let l = self.solver.int_value(self.loop_var)?;
        let l = usize::try_from(l).map_err(|_| EncodingError::Protocol(format!("model has L = {l}")))?;
        Ok(CoarseRun::new(points, self.state_dim, l, self.ts)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DplanOutcome {
    Sat(DiscretePlan),
    Unsat,
}

/// Iterative-deepening front end over a [`SolverSession`].
pub struct DiscretePlanner {
    session: SolverSession,
    formula: StlFormula,
    x_init: Vec<f64>,
    depth: Option<usize>,
}

impl DiscretePlanner {
    pub fn new(backend: &Backend, f: &StlFormula, sys: &LinearSystem, x_init: &[f64]) -> Result<Self, EncodingError> {
        if x_init.len() != sys.n() {
            return Err(EncodingError::Protocol(format!("x_init has {} entries, expected {}", x_init.len(), sys.n())));
        }
        let session = SolverSession::new(backend, f, sys.ts, sys.n(), sys.m())?;
        Ok(DiscretePlanner { session, formula: f.clone(), x_init: x_init.to_vec(), depth: None })
    }

    pub fn session(&self) -> &SolverSession {
        &self.session
    }

    /// Current depth `K`, if any call was made.
    pub fn depth(&self) -> Option<usize> {
        self.depth
    }

    /// Plans at depth `k`. The first call may start at any depth; afterwards
    /// `k` either repeats the previous depth together with new
    /// counterexamples, or exceeds it by one.
    pub fn dplan(&mut self, k: usize, new_cexs: &[Counterexample]) -> Result<DplanOutcome, EncodingError> {
        match self.depth {
            None => {
                self.session.encode_root(&self.x_init)?;
                for kp in 0..=k {
                    self.session.encode_step(kp)?;
                }
                self.session.encode_cex(new_cexs)?;
            }
            Some(prev) => {
                if k == prev {
                    if new_cexs.is_empty() {
                        return Err(EncodingError::Protocol(format!("depth {k} repeated without counterexamples")));
                    }
                } else if k != prev + 1 {
                    return Err(EncodingError::Protocol(format!("depth {k} after {prev}")));
                } else if !new_cexs.is_empty() {
                    return Err(EncodingError::Protocol("counterexamples while deepening".into()));
                }
                self.session.pop()?;
                if k == prev {
                    self.session.encode_cex(new_cexs)?;
                } else {
                    self.session.encode_step(k)?;
                }
            }
        }
        self.depth = Some(k);
        self.session.push()?;
        self.session.encode_loop(k)?;
        match self.session.check()? {
            SatResult::Unsat => Ok(DplanOutcome::Unsat),
            SatResult::Sat => {
                let cr = self.session.extract(k)?;
                Ok(DplanOutcome::Sat(DiscretePlan::from_coarse_run(&self.formula, cr)))
            }
        }
    }
}
