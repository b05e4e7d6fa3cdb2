//! Embedded CDCL(T) solver: Tseitin front end over [`sat::Sat`] with the
//! [`simplex::Simplex`] theory. Push/pop uses activation literals; integer
//! variables use an order encoding with `[x <= c]` atoms created on demand.

pub mod sat;
pub mod simplex;

use crate::expr::{BoolVar, Expr, IntVar, Linear, RealVar, Rel};
use crate::{SatResult, SmtError, Solver};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use sat::{Lit, Sat};
use simplex::{Simplex, Q};
use std::collections::{BTreeMap, HashMap};

pub struct EmbeddedSolver {
    sat: Sat<Simplex>,
    true_lit: Lit,
    bools: Vec<Lit>,
    reals: Vec<usize>,
    ints: Vec<BTreeMap<i64, Lit>>,
    frames: Vec<Lit>,
    and_cache: HashMap<Vec<Lit>, Lit>,
    has_model: bool,
}

impl Default for EmbeddedSolver {
    fn default() -> Self {
        Self::new()
    }
}

fn to_q(x: f64) -> Result<Q, SmtError> {
    BigRational::from_float(x).ok_or_else(|| SmtError::InvalidTerm(format!("non-finite coefficient {x}")))
}

impl EmbeddedSolver {
    pub fn new() -> Self {
        let mut sat = Sat::new(Simplex::new());
        let t = sat.new_var(false);
        let true_lit = Lit::new(t, false);
        sat.add_clause(&[true_lit]);
        EmbeddedSolver {
            sat,
            true_lit,
            bools: Vec::new(),
            reals: Vec::new(),
            ints: Vec::new(),
            frames: Vec::new(),
            and_cache: HashMap::new(),
            has_model: false,
        }
    }

    pub fn stats(&self) -> sat::SatStats {
        self.sat.stats
    }

    fn fresh(&mut self) -> Lit {
        Lit::new(self.sat.new_var(false), false)
    }

    fn and_lits(&mut self, mut lits: Vec<Lit>) -> Lit {
        lits.retain(|&l| l != self.true_lit);
        lits.sort();
        lits.dedup();
        if lits.contains(&!self.true_lit) || lits.windows(2).any(|w| w[0] == !w[1]) {
            return !self.true_lit;
        }
        match lits.len() {
            0 => return self.true_lit,
            1 => return lits[0],
            _ => {}
        }
        if let Some(&l) = self.and_cache.get(&lits) {
            return l;
        }
        let v = self.fresh();
        for &l in &lits {
            self.sat.add_clause(&[!v, l]);
        }
        let mut big: Vec<Lit> = lits.iter().map(|&l| !l).collect();
        big.push(v);
        self.sat.add_clause(&big);
        self.and_cache.insert(lits, v);
        v
    }

    fn linear_lit(&mut self, lin: &Linear) -> Result<Lit, SmtError> {
        let mut terms: BTreeMap<usize, Q> = BTreeMap::new();
        for &(v, c) in &lin.terms {
            let tv = *self
                .reals
                .get(v.index())
                .ok_or_else(|| SmtError::InvalidTerm(format!("unknown real variable {}", v.index())))?;
            *terms.entry(tv).or_insert_with(Q::zero) += to_q(c)?;
        }
        terms.retain(|_, c| !c.is_zero());
        let constant = to_q(lin.constant)?;
        if terms.is_empty() {
            let z = Q::zero();
            let holds = match lin.rel {
                Rel::Gt => constant > z,
                Rel::Ge => constant >= z,
                Rel::Lt => constant < z,
                Rel::Le => constant <= z,
                Rel::Eq => constant == z,
            };
            return Ok(if holds { self.true_lit } else { !self.true_lit });
        }
        let lead = terms.values().next().unwrap().clone();
        let flip = lead.is_negative();
        let scale = lead.abs().recip();
        let sign = if flip { -Q::one() } else { Q::one() };
        let norm: Vec<(usize, Q)> = terms.into_iter().map(|(v, c)| (v, c * &scale * &sign)).collect();
        let bound = -(constant * &scale * &sign);
        let rel = if flip {
            match lin.rel {
                Rel::Gt => Rel::Lt,
                Rel::Ge => Rel::Le,
                Rel::Lt => Rel::Gt,
                Rel::Le => Rel::Ge,
                Rel::Eq => Rel::Eq,
            }
        } else {
            lin.rel
        };
        let s = self.sat.theory.linear_var(norm);
        Ok(match rel {
            Rel::Gt => self.atom(s, true, bound),
            Rel::Ge => self.atom(s, false, bound),
            Rel::Lt => !self.atom(s, false, bound),
            Rel::Le => !self.atom(s, true, bound),
            Rel::Eq => {
                let ge = self.atom(s, false, bound.clone());
                let gt = self.atom(s, true, bound);
                self.and_lits(vec![ge, !gt])
            }
        })
    }

    fn atom(&mut self, var: usize, strict: bool, bound: Q) -> Lit {
        if let Some(v) = self.sat.theory.find_atom(var, strict, &bound) {
            return Lit::new(v, false);
        }
        let v = self.sat.new_var(true);
        self.sat.theory.add_atom(var, strict, bound, v);
        Lit::new(v, false)
    }

    /// Literal for `x <= c`.
    fn int_le(&mut self, x: IntVar, c: i64) -> Result<Lit, SmtError> {
        let thresholds = self
            .ints
            .get(x.index())
            .ok_or_else(|| SmtError::InvalidTerm(format!("unknown int variable {}", x.index())))?;
        if let Some(&l) = thresholds.get(&c) {
            return Ok(l);
        }
        let below = thresholds.range(..c).next_back().map(|(_, &l)| l);
        let above = thresholds.range(c + 1..).next().map(|(_, &l)| l);
        let l = self.fresh();
        if let Some(b) = below {
            self.sat.add_clause(&[!b, l]);
        }
        if let Some(a) = above {
            self.sat.add_clause(&[!l, a]);
        }
        self.ints[x.index()].insert(c, l);
        Ok(l)
    }

    fn int_lit(&mut self, x: IntVar, rel: Rel, c: i64) -> Result<Lit, SmtError> {
        Ok(match rel {
            Rel::Le => self.int_le(x, c)?,
            Rel::Lt => self.int_le(x, c - 1)?,
            Rel::Gt => !self.int_le(x, c)?,
            Rel::Ge => !self.int_le(x, c - 1)?,
            Rel::Eq => {
                let le = self.int_le(x, c)?;
                let lt = self.int_le(x, c - 1)?;
                self.and_lits(vec![le, !lt])
            }
        })
    }

    fn lit_of(&mut self, e: &Expr) -> Result<Lit, SmtError> {
        Ok(match e {
            Expr::True => self.true_lit,
            Expr::False => !self.true_lit,
            Expr::Bool(v) => *self
                .bools
                .get(v.index())
                .ok_or_else(|| SmtError::InvalidTerm(format!("unknown bool variable {}", v.index())))?,
            Expr::Not(inner) => !self.lit_of(inner)?,
            Expr::And(items) => {
                let lits = items.iter().map(|x| self.lit_of(x)).collect::<Result<Vec<_>, _>>()?;
                self.and_lits(lits)
            }
            Expr::Or(items) => {
                let lits = items
                    .iter()
                    .map(|x| self.lit_of(x).map(|l| !l))
                    .collect::<Result<Vec<_>, _>>()?;
                !self.and_lits(lits)
            }
            Expr::Linear(l) => self.linear_lit(l)?,
            Expr::Int { var, rel, value } => self.int_lit(*var, *rel, *value)?,
        })
    }

    fn assert_guarded(&mut self, e: &Expr, guard: Option<Lit>) -> Result<(), SmtError> {
        match e {
            Expr::True => Ok(()),
            Expr::And(items) => {
                for x in items {
                    self.assert_guarded(x, guard)?;
                }
                Ok(())
            }
            Expr::Or(items) => {
                let mut clause = items.iter().map(|x| self.lit_of(x)).collect::<Result<Vec<_>, _>>()?;
                clause.extend(guard);
                self.sat.add_clause(&clause);
                Ok(())
            }
            other => {
                let l = self.lit_of(other)?;
                let mut clause = vec![l];
                clause.extend(guard);
                self.sat.add_clause(&clause);
                Ok(())
            }
        }
    }
}

impl Solver for EmbeddedSolver {
    fn new_bool(&mut self, _name: &str) -> Result<BoolVar, SmtError> {
        let l = self.fresh();
        self.bools.push(l);
        Ok(BoolVar(self.bools.len() as u32 - 1))
    }

    fn new_real(&mut self, _name: &str) -> Result<RealVar, SmtError> {
        let v = self.sat.theory.new_var();
        self.reals.push(v);
        Ok(RealVar(self.reals.len() as u32 - 1))
    }

    fn new_int(&mut self, _name: &str) -> Result<IntVar, SmtError> {
        self.ints.push(BTreeMap::new());
        Ok(IntVar(self.ints.len() as u32 - 1))
    }

    fn assert(&mut self, e: &Expr) -> Result<(), SmtError> {
        self.has_model = false;
        let guard = self.frames.last().map(|&s| !s);
        self.assert_guarded(e, guard)
    }

    fn push(&mut self) -> Result<(), SmtError> {
        self.has_model = false;
        let s = self.fresh();
        self.frames.push(s);
        Ok(())
    }

    fn pop(&mut self) -> Result<(), SmtError> {
        self.has_model = false;
        let s = self.frames.pop().ok_or(SmtError::PopEmpty)?;
        self.sat.add_clause(&[!s]);
        Ok(())
    }

    fn check(&mut self) -> Result<SatResult, SmtError> {
        let frames = self.frames.clone();
        let sat = self.sat.solve(&frames);
        self.has_model = sat;
        Ok(if sat { SatResult::Sat } else { SatResult::Unsat })
    }

    fn real_values(&mut self, vars: &[RealVar]) -> Result<Vec<f64>, SmtError> {
        if !self.has_model {
            return Err(SmtError::NoModel);
        }
        Ok(vars
            .iter()
            .map(|v| self.sat.theory.model_value(self.reals[v.index()]))
            .collect())
    }

    fn int_value(&mut self, v: IntVar) -> Result<i64, SmtError> {
        if !self.has_model {
            return Err(SmtError::NoModel);
        }
        let thresholds = &self.ints[v.index()];
        for (&c, &l) in thresholds {
            let val = self.sat.model_value(l.var()) != l.is_neg();
            if val {
                return Ok(c);
            }
        }
        Ok(thresholds.keys().next_back().map_or(0, |&c| c + 1))
    }

    fn bool_value(&mut self, v: BoolVar) -> Result<bool, SmtError> {
        if !self.has_model {
            return Err(SmtError::NoModel);
        }
        let l = self.bools[v.index()];
        Ok(self.sat.model_value(l.var()) != l.is_neg())
    }

    fn depth(&self) -> usize {
        self.frames.len()
    }

    fn backend_name(&self) -> &'static str {
        "embedded"
    }
}
