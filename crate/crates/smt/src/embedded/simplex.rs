//! General simplex for linear real arithmetic (Dutertre and de Moura) over
//! delta-rationals, with Bland's rule, backtrackable bounds and unate bound
//! propagation between atoms on the same variable.

use super::sat::{Lit, Theory};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

pub type Q = BigRational;

/// `c + k·δ` for an infinitesimal δ > 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeltaQ {
    c: Q,
    k: Q,
}

impl DeltaQ {
    fn new(c: Q, k: Q) -> Self {
        DeltaQ { c, k }
    }

    fn zero() -> Self {
        DeltaQ { c: Q::zero(), k: Q::zero() }
    }

    fn add(&self, o: &DeltaQ) -> DeltaQ {
        DeltaQ { c: &self.c + &o.c, k: &self.k + &o.k }
    }

    fn sub(&self, o: &DeltaQ) -> DeltaQ {
        DeltaQ { c: &self.c - &o.c, k: &self.k - &o.k }
    }

    fn scale(&self, s: &Q) -> DeltaQ {
        DeltaQ { c: &self.c * s, k: &self.k * s }
    }
}

impl PartialOrd for DeltaQ {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for DeltaQ {
    fn cmp(&self, other: &Self) -> Ordering {
        self.c.cmp(&other.c).then_with(|| self.k.cmp(&other.k))
    }
}

#[derive(Clone, Debug)]
struct Bound {
    value: DeltaQ,
    reason: Lit,
}

struct Var {
    lower: Option<Bound>,
    upper: Option<Bound>,
    value: DeltaQ,
    row: Option<usize>,
    atoms: Vec<usize>,
}

struct Row {
    basic: usize,
    terms: Vec<(usize, Q)>,
}

/// Positive literal means `var > bound` (strict) or `var >= bound`.
struct Atom {
    var: usize,
    strict: bool,
    bound: Q,
    sat_var: u32,
}

enum Undo {
    Lower(usize, Option<Bound>),
    Upper(usize, Option<Bound>),
}

pub struct Simplex {
    vars: Vec<Var>,
    rows: Vec<Row>,
    cols: Vec<BTreeSet<usize>>,
    atoms: Vec<Atom>,
    atom_of: HashMap<u32, usize>,
    atom_index: HashMap<(usize, bool, Q), usize>,
    slack_index: HashMap<Vec<(usize, Q)>, usize>,
    undo: Vec<Undo>,
    marks: Vec<usize>,
    model: Vec<f64>,
    pub pivots: u64,
}

impl Default for Simplex {
    fn default() -> Self {
        Self::new()
    }
}

impl Simplex {
    pub fn new() -> Self {
        Simplex {
            vars: Vec::new(),
            rows: Vec::new(),
            cols: Vec::new(),
            atoms: Vec::new(),
            atom_of: HashMap::new(),
            atom_index: HashMap::new(),
            slack_index: HashMap::new(),
            undo: Vec::new(),
            marks: Vec::new(),
            model: Vec::new(),
            pivots: 0,
        }
    }

    pub fn new_var(&mut self) -> usize {
        self.vars.push(Var { lower: None, upper: None, value: DeltaQ::zero(), row: None, atoms: Vec::new() });
        self.cols.push(BTreeSet::new());
        self.vars.len() - 1
    }

    /// Returns a variable equal to `Σ coeff·var`. Terms must be sorted by
    /// variable, merged and nonzero.
    pub fn linear_var(&mut self, terms: Vec<(usize, Q)>) -> usize {
        if terms.len() == 1 && terms[0].1.is_one() {
            return terms[0].0;
        }
        if let Some(&s) = self.slack_index.get(&terms) {
            return s;
        }
        let s = self.new_var();
        self.slack_index.insert(terms.clone(), s);
        let mut row: Vec<(usize, Q)> = Vec::new();
        for (v, c) in &terms {
            match self.vars[*v].row {
                Some(r) => {
                    let sub = self.rows[r].terms.clone();
                    row = merge_scaled(&row, &sub, c);
                }
                None => {
                    row = merge_scaled(&row, &[(*v, Q::one())], c);
                }
            }
        }
        let mut value = DeltaQ::zero();
        for (v, c) in &row {
            value = value.add(&self.vars[*v].value.scale(c));
        }
        let r = self.rows.len();
        for (v, _) in &row {
            self.cols[*v].insert(r);
        }
        self.rows.push(Row { basic: s, terms: row });
        self.vars[s].row = Some(r);
        self.vars[s].value = value;
        s
    }

    /// Registers (or finds) the atom `var > bound` / `var >= bound`.
    /// Returns `Err(existing_sat_var)` when the atom already exists.
    pub fn find_atom(&self, var: usize, strict: bool, bound: &Q) -> Option<u32> {
        self.atom_index
            .get(&(var, strict, bound.clone()))
            .map(|&a| self.atoms[a].sat_var)
    }

    pub fn add_atom(&mut self, var: usize, strict: bool, bound: Q, sat_var: u32) {
        let id = self.atoms.len();
        self.atom_index.insert((var, strict, bound.clone()), id);
        self.atoms.push(Atom { var, strict, bound, sat_var });
        self.atom_of.insert(sat_var, id);
        self.vars[var].atoms.push(id);
    }

    pub fn model_value(&self, var: usize) -> f64 {
        self.model.get(var).copied().unwrap_or(0.0)
    }

    /// Lower bound (true) or upper bound (false) asserted by a literal.
    fn bound_of(&self, lit: Lit) -> Option<(usize, bool, DeltaQ)> {
        let &a = self.atom_of.get(&lit.var())?;
        let atom = &self.atoms[a];
        let b = atom.bound.clone();
        Some(match (lit.is_neg(), atom.strict) {
            (false, true) => (atom.var, true, DeltaQ::new(b, Q::one())),
            (false, false) => (atom.var, true, DeltaQ::new(b, Q::zero())),
            (true, true) => (atom.var, false, DeltaQ::new(b, Q::zero())),
            (true, false) => (atom.var, false, DeltaQ::new(b, -Q::one())),
        })
    }

    fn update(&mut self, x: usize, v: DeltaQ) {
        let delta = v.sub(&self.vars[x].value);
        self.vars[x].value = v;
        let rows: Vec<usize> = self.cols[x].iter().copied().collect();
        for r in rows {
            let c = coeff(&self.rows[r].terms, x).expect("column index out of sync");
            let b = self.rows[r].basic;
            self.vars[b].value = self.vars[b].value.add(&delta.scale(&c));
        }
    }

    fn assert_lower(&mut self, x: usize, v: DeltaQ, reason: Lit, implied: &mut Vec<(Lit, Lit)>) -> Result<(), Vec<Lit>> {
        if let Some(l) = &self.vars[x].lower {
            if v <= l.value {
                return Ok(());
            }
        }
        if let Some(u) = &self.vars[x].upper {
            if v > u.value {
                return Err(vec![reason, u.reason]);
            }
        }
        let old = self.vars[x].lower.replace(Bound { value: v.clone(), reason });
        self.undo.push(Undo::Lower(x, old));
        if self.vars[x].row.is_none() && self.vars[x].value < v {
            self.update(x, v);
        }
        self.propagate_atoms(x, implied);
        Ok(())
    }

    fn assert_upper(&mut self, x: usize, v: DeltaQ, reason: Lit, implied: &mut Vec<(Lit, Lit)>) -> Result<(), Vec<Lit>> {
        if let Some(u) = &self.vars[x].upper {
            if v >= u.value {
                return Ok(());
            }
        }
        if let Some(l) = &self.vars[x].lower {
            if v < l.value {
                return Err(vec![reason, l.reason]);
            }
        }
        let old = self.vars[x].upper.replace(Bound { value: v.clone(), reason });
        self.undo.push(Undo::Upper(x, old));
        if self.vars[x].row.is_none() && self.vars[x].value > v {
            self.update(x, v);
        }
        self.propagate_atoms(x, implied);
        Ok(())
    }

    fn propagate_atoms(&self, x: usize, implied: &mut Vec<(Lit, Lit)>) {
        let var = &self.vars[x];
        for &a in &var.atoms {
            let atom = &self.atoms[a];
            let pos = Lit::new(atom.sat_var, false);
            let (lo, hi) = match atom.strict {
                true => (DeltaQ::new(atom.bound.clone(), Q::one()), DeltaQ::new(atom.bound.clone(), Q::zero())),
                false => (DeltaQ::new(atom.bound.clone(), Q::zero()), DeltaQ::new(atom.bound.clone(), -Q::one())),
            };
            if let Some(l) = &var.lower {
                if l.value >= lo && l.reason != pos {
                    implied.push((pos, l.reason));
                }
            }
            if let Some(u) = &var.upper {
                if u.value <= hi && u.reason != !pos {
                    implied.push((!pos, u.reason));
                }
            }
        }
    }

    fn violated_row(&self) -> Option<usize> {
        let mut best: Option<(usize, usize)> = None;
        for (r, row) in self.rows.iter().enumerate() {
            let v = &self.vars[row.basic];
            let bad = v.lower.as_ref().is_some_and(|l| v.value < l.value)
                || v.upper.as_ref().is_some_and(|u| v.value > u.value);
            if bad && best.is_none_or(|(b, _)| row.basic < b) {
                best = Some((row.basic, r));
            }
        }
        best.map(|(_, r)| r)
    }

    fn pivot_and_update(&mut self, r: usize, j: usize, target: DeltaQ) {
        let i = self.rows[r].basic;
        let a = coeff(&self.rows[r].terms, j).unwrap();
        let theta = target.sub(&self.vars[i].value).scale(&a.recip());
        self.vars[i].value = target;
        self.vars[j].value = self.vars[j].value.add(&theta);
        let others: Vec<usize> = self.cols[j].iter().copied().filter(|&r2| r2 != r).collect();
        for r2 in &others {
            let c = coeff(&self.rows[*r2].terms, j).unwrap();
            let b = self.rows[*r2].basic;
            self.vars[b].value = self.vars[b].value.add(&theta.scale(&c));
        }
        self.pivot(r, j);
    }

    fn pivot(&mut self, r: usize, j: usize) {
        self.pivots += 1;
        let i = self.rows[r].basic;
        let old = std::mem::take(&mut self.rows[r].terms);
        let a = coeff(&old, j).unwrap();
        let inv = a.recip();
        // x_j = inv·x_i − Σ_{k≠j} (a_k·inv)·x_k
        let mut new_terms: Vec<(usize, Q)> = Vec::with_capacity(old.len());
        for (k, c) in &old {
            if *k != j {
                new_terms.push((*k, -(c * &inv)));
            }
        }
        let pos = new_terms.partition_point(|(k, _)| *k < i);
        new_terms.insert(pos, (i, inv));
        for (k, _) in &old {
            self.cols[*k].remove(&r);
        }
        for (k, _) in &new_terms {
            self.cols[*k].insert(r);
        }
        self.rows[r].terms = new_terms;
        self.rows[r].basic = j;
        self.vars[i].row = None;
        self.vars[j].row = Some(r);

        let others: Vec<usize> = self.cols[j].iter().copied().filter(|&r2| r2 != r).collect();
        let sub = self.rows[r].terms.clone();
        for r2 in others {
            let terms = std::mem::take(&mut self.rows[r2].terms);
            let c = coeff(&terms, j).unwrap();
            let without: Vec<(usize, Q)> = terms.iter().filter(|(k, _)| *k != j).cloned().collect();
            let merged = merge_scaled(&without, &sub, &c);
            for (k, _) in &terms {
                self.cols[*k].remove(&r2);
            }
            for (k, _) in &merged {
                self.cols[*k].insert(r2);
            }
            self.rows[r2].terms = merged;
        }
        debug_assert!(self.cols[j].is_empty());
    }

    fn compute_model(&mut self) {
        let mut delta = Q::one();
        for v in &self.vars {
            if let Some(l) = &v.lower {
                if l.value.c < v.value.c && l.value.k > v.value.k {
                    let d = (&v.value.c - &l.value.c) / (&l.value.k - &v.value.k);
                    if d < delta {
                        delta = d;
                    }
                }
            }
            if let Some(u) = &v.upper {
                if v.value.c < u.value.c && v.value.k > u.value.k {
                    let d = (&u.value.c - &v.value.c) / (&v.value.k - &u.value.k);
                    if d < delta {
                        delta = d;
                    }
                }
            }
        }
        delta /= Q::from_integer(BigInt::from(2));
        self.model = self
            .vars
            .iter()
            .map(|v| {
                let x = &v.value.c + &v.value.k * &delta;
                x.to_f64().unwrap_or(f64::NAN)
            })
            .collect();
    }
}

fn coeff(terms: &[(usize, Q)], var: usize) -> Option<Q> {
    terms
        .binary_search_by_key(&var, |(v, _)| *v)
        .ok()
        .map(|i| terms[i].1.clone())
}

/// `a + s·b` for sorted sparse vectors.
fn merge_scaled(a: &[(usize, Q)], b: &[(usize, Q)], s: &Q) -> Vec<(usize, Q)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j >= b.len() || (i < a.len() && a[i].0 < b[j].0) {
            out.push(a[i].clone());
            i += 1;
        } else if i >= a.len() || b[j].0 < a[i].0 {
            out.push((b[j].0, &b[j].1 * s));
            j += 1;
        } else {
            let c = &a[i].1 + &b[j].1 * s;
            if !c.is_zero() {
                out.push((a[i].0, c));
            }
            i += 1;
            j += 1;
        }
    }
    out
}

impl Theory for Simplex {
    fn assert_lit(&mut self, lit: Lit, implied: &mut Vec<(Lit, Lit)>) -> Result<(), Vec<Lit>> {
        match self.bound_of(lit) {
            Some((x, true, v)) => self.assert_lower(x, v, lit, implied),
            Some((x, false, v)) => self.assert_upper(x, v, lit, implied),
            None => Ok(()),
        }
    }

    fn check(&mut self) -> Result<(), Vec<Lit>> {
        loop {
            let Some(r) = self.violated_row() else {
                return Ok(());
            };
            let i = self.rows[r].basic;
            let below = self.vars[i].lower.as_ref().is_some_and(|l| self.vars[i].value < l.value);
            let mut pick = None;
            for (j, a) in &self.rows[r].terms {
                let xj = &self.vars[*j];
                let up = a.is_positive() == below;
                let movable = if up {
                    xj.upper.as_ref().is_none_or(|u| xj.value < u.value)
                } else {
                    xj.lower.as_ref().is_none_or(|l| xj.value > l.value)
                };
                if movable {
                    pick = Some(*j);
                    break;
                }
            }
            match pick {
                Some(j) => {
                    let target = if below {
                        self.vars[i].lower.as_ref().unwrap().value.clone()
                    } else {
                        self.vars[i].upper.as_ref().unwrap().value.clone()
                    };
                    self.pivot_and_update(r, j, target);
                }
                None => {
                    let mut expl = Vec::with_capacity(self.rows[r].terms.len() + 1);
                    if below {
                        expl.push(self.vars[i].lower.as_ref().unwrap().reason);
                    } else {
                        expl.push(self.vars[i].upper.as_ref().unwrap().reason);
                    }
                    for (j, a) in &self.rows[r].terms {
                        let xj = &self.vars[*j];
                        let b = if a.is_positive() == below { &xj.upper } else { &xj.lower };
                        expl.push(b.as_ref().unwrap().reason);
                    }
                    expl.sort();
                    expl.dedup();
                    return Err(expl);
                }
            }
        }
    }

    fn push_level(&mut self) {
        self.marks.push(self.undo.len());
    }

    fn pop_levels(&mut self, count: usize) {
        for _ in 0..count {
            let mark = self.marks.pop().expect("theory level underflow");
            while self.undo.len() > mark {
                match self.undo.pop().unwrap() {
                    Undo::Lower(x, b) => self.vars[x].lower = b,
                    Undo::Upper(x, b) => self.vars[x].upper = b,
                }
            }
        }
    }

    fn on_model(&mut self) {
        self.compute_model();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64) -> Q {
        Q::from_integer(BigInt::from(n))
    }

    #[test]
    fn merge_cancels_terms() {
        let a = vec![(0, q(1)), (2, q(3))];
        let b = vec![(0, q(1)), (1, q(1))];
        let m = merge_scaled(&a, &b, &q(-1));
        assert_eq!(m, vec![(1, q(-1)), (2, q(3))]);
    }

    #[test]
    fn delta_order_is_lexicographic() {
        assert!(DeltaQ::new(q(1), q(0)) < DeltaQ::new(q(1), q(1)));
        assert!(DeltaQ::new(q(1), q(5)) < DeltaQ::new(q(2), q(-5)));
    }
}
