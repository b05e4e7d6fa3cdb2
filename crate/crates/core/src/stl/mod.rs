//! Signal temporal logic over linear predicates in negation normal form.
//!
//! Runs are sampled with period `Ts`; a temporal interval `[a, b]` in seconds
//! covers the sample offsets `ceil(a/Ts) ..= floor(b/Ts)`.

mod coarse;
mod eval;
mod parse;

pub use coarse::{coarse_evaluate, coarse_satisfies, unroll, CoarseRun, CoarseRunError};
pub use eval::{evaluate, robustness, robustness_on, satisfies, EvalError, Trace};
pub use parse::{parse_formula, ParseError, ParseErrorKind};

use std::fmt;

const STEP_EPS: f64 = 1e-9;

pub(crate) fn floor_steps(x: f64) -> usize {
    (x + STEP_EPS).floor().max(0.0) as usize
}

pub(crate) fn ceil_steps(x: f64) -> usize {
    (x - STEP_EPS).ceil().max(0.0) as usize
}

/// Linear predicate `h·r + a > 0` over the concatenated point `r = (x, u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Predicate {
    pub coeffs: Vec<f64>,
    pub offset: f64,
}

impl Predicate {
    pub fn new(coeffs: Vec<f64>, offset: f64) -> Self {
        Predicate { coeffs, offset }
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.coeffs.iter().zip(point).map(|(h, r)| h * r).sum::<f64>() + self.offset
    }

    pub fn negated(&self) -> Predicate {
        Predicate {
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
            offset: -self.offset,
        }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }
}

/// Closed time interval `[lo, hi]` in seconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn is_valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && 0.0 <= self.lo && self.lo <= self.hi
    }

    /// Sample offsets covered by the interval.
    pub fn steps(&self, ts: f64) -> (usize, usize) {
        (ceil_steps(self.lo / ts), floor_steps(self.hi / ts))
    }

    /// `(floor(a/Ts), ceil(b/Ts))`, the offsets used by the discrete encoding.
    pub fn outer_steps(&self, ts: f64) -> (usize, usize) {
        (floor_steps(self.lo / ts), ceil_steps(self.hi / ts))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StlFormula {
    Pred(Predicate),
    NegPred(Predicate),
    And(Box<StlFormula>, Box<StlFormula>),
    Or(Box<StlFormula>, Box<StlFormula>),
    Always(Interval, Box<StlFormula>),
    Eventually(Interval, Box<StlFormula>),
    Until(Interval, Box<StlFormula>, Box<StlFormula>),
}

impl StlFormula {
    pub fn and(a: StlFormula, b: StlFormula) -> Self {
        StlFormula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: StlFormula, b: StlFormula) -> Self {
        StlFormula::Or(Box::new(a), Box::new(b))
    }

    pub fn always(lo: f64, hi: f64, f: StlFormula) -> Self {
        StlFormula::Always(Interval::new(lo, hi), Box::new(f))
    }

    pub fn eventually(lo: f64, hi: f64, f: StlFormula) -> Self {
        StlFormula::Eventually(Interval::new(lo, hi), Box::new(f))
    }

    pub fn until(lo: f64, hi: f64, a: StlFormula, b: StlFormula) -> Self {
        StlFormula::Until(Interval::new(lo, hi), Box::new(a), Box::new(b))
    }

    /// Conjunction of a non-empty list, left-nested.
    pub fn all(items: Vec<StlFormula>) -> Self {
        let mut it = items.into_iter();
        let first = it.next().expect("empty conjunction");
        it.fold(first, StlFormula::and)
    }

    /// Disjunction of a non-empty list, left-nested.
    pub fn any(items: Vec<StlFormula>) -> Self {
        let mut it = items.into_iter();
        let first = it.next().expect("empty disjunction");
        it.fold(first, StlFormula::or)
    }

    pub fn children(&self) -> Vec<&StlFormula> {
        match self {
            StlFormula::Pred(_) | StlFormula::NegPred(_) => vec![],
            StlFormula::And(a, b) | StlFormula::Or(a, b) | StlFormula::Until(_, a, b) => vec![a, b],
            StlFormula::Always(_, a) | StlFormula::Eventually(_, a) => vec![a],
        }
    }

    pub fn interval(&self) -> Option<Interval> {
        match self {
            StlFormula::Always(i, _) | StlFormula::Eventually(i, _) | StlFormula::Until(i, _, _) => Some(*i),
            _ => None,
        }
    }

    pub fn is_temporal(&self) -> bool {
        self.interval().is_some()
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    /// Maximum over root-to-leaf paths of the summed interval upper bounds.
    pub fn bound_seconds(&self) -> f64 {
        let own = self.interval().map_or(0.0, |i| i.hi);
        own + self.children().iter().map(|c| c.bound_seconds()).fold(0.0, f64::max)
    }

    /// Halfspaces `f > 0` of the atoms in pre-order; a negated predicate
    /// contributes its negation.
    pub fn atoms(&self) -> Vec<Predicate> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut Vec<Predicate>) {
        match self {
            StlFormula::Pred(p) => out.push(p.clone()),
            StlFormula::NegPred(p) => out.push(p.negated()),
            _ => self.children().iter().for_each(|c| c.collect_atoms(out)),
        }
    }

    /// Checks intervals and predicate dimensions.
    pub fn validate(&self, dim: usize) -> Result<(), String> {
        match self {
            StlFormula::Pred(p) | StlFormula::NegPred(p) => {
                if p.dim() != dim {
                    return Err(format!("predicate has {} coefficients, expected {dim}", p.dim()));
                }
                if p.coeffs.iter().all(|&c| c == 0.0) {
                    return Err("predicate with all-zero coefficients".into());
                }
                if !p.offset.is_finite() || p.coeffs.iter().any(|c| !c.is_finite()) {
                    return Err("predicate with non-finite data".into());
                }
                Ok(())
            }
            other => {
                if let Some(i) = other.interval() {
                    if !i.is_valid() {
                        return Err(format!("invalid interval [{}, {}]", i.lo, i.hi));
                    }
                }
                other.children().iter().try_for_each(|c| c.validate(dim))
            }
        }
    }

    /// Pretty-printer in the input grammar; `names` label the coefficients.
    pub fn display<'a>(&'a self, names: &'a [String]) -> Display<'a> {
        Display { f: self, names }
    }

    fn precedence(&self) -> u8 {
        match self {
            StlFormula::Or(..) => 1,
            StlFormula::And(..) => 2,
            StlFormula::Until(..) => 3,
            StlFormula::Always(..) | StlFormula::Eventually(..) | StlFormula::NegPred(_) => 4,
            StlFormula::Pred(_) => 5,
        }
    }
}

/// Horizon in samples: `ceil(bound_seconds / Ts)`.
pub fn formula_bound(f: &StlFormula, ts: f64) -> usize {
    ceil_steps(f.bound_seconds() / ts)
}

pub struct Display<'a> {
    f: &'a StlFormula,
    names: &'a [String],
}

fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x}")
    }
}

fn fmt_pred(p: &Predicate, names: &[String], out: &mut fmt::Formatter<'_>) -> fmt::Result {
    let mut first = true;
    for (i, &c) in p.coeffs.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let name = names.get(i).map_or_else(|| format!("r{i}"), |s| s.clone());
        let mag = c.abs();
        let term = if mag == 1.0 { name } else { format!("{}*{}", fmt_num(mag), name) };
        match (first, c < 0.0) {
            (true, false) => write!(out, "{term}")?,
            (true, true) => write!(out, "-{term}")?,
            (false, false) => write!(out, " + {term}")?,
            (false, true) => write!(out, " - {term}")?,
        }
        first = false;
    }
    write!(out, " > {}", fmt_num(-p.offset))
}

impl Display<'_> {
    fn child(&self, c: &StlFormula, min_prec: u8, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        if c.precedence() < min_prec {
            write!(out, "({})", c.display(self.names))
        } else {
            write!(out, "{}", c.display(self.names))
        }
    }
}

impl fmt::Display for Display<'_> {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        let iv = |i: &Interval| format!("[{}, {}]", fmt_num(i.lo), fmt_num(i.hi));
        match self.f {
            StlFormula::Pred(p) => fmt_pred(p, self.names, out),
            StlFormula::NegPred(p) => {
                out.write_str("!(")?;
                fmt_pred(p, self.names, out)?;
                out.write_str(")")
            }
            StlFormula::And(a, b) => {
                self.child(a, 2, out)?;
                out.write_str(" & ")?;
                self.child(b, 3, out)
            }
            StlFormula::Or(a, b) => {
                self.child(a, 1, out)?;
                out.write_str(" | ")?;
                self.child(b, 2, out)
            }
            StlFormula::Until(i, a, b) => {
                self.child(a, 3, out)?;
                write!(out, " U{} ", iv(i))?;
                self.child(b, 4, out)
            }
            StlFormula::Always(i, a) => {
                write!(out, "G{} ", iv(i))?;
                self.child(a, 4, out)
            }
            StlFormula::Eventually(i, a) => {
                write!(out, "F{} ", iv(i))?;
                self.child(a, 4, out)
            }
        }
    }
}
