//! Backend-neutral term language: Boolean structure over linear real atoms
//! and comparisons of integer variables against constants.

use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BoolVar(pub(crate) u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RealVar(pub(crate) u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IntVar(pub(crate) u32);

impl BoolVar {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RealVar {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl IntVar {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rel {
    Gt,
    Ge,
    Lt,
    Le,
    Eq,
}

impl Rel {
    pub fn symbol(self) -> &'static str {
        match self {
            Rel::Gt => ">",
            Rel::Ge => ">=",
            Rel::Lt => "<",
            Rel::Le => "<=",
            Rel::Eq => "=",
        }
    }

    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Rel::Gt => lhs > rhs,
            Rel::Ge => lhs >= rhs,
            Rel::Lt => lhs < rhs,
            Rel::Le => lhs <= rhs,
            Rel::Eq => lhs == rhs,
        }
    }
}

/// `Σ cᵢ·xᵢ + constant  rel  0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub terms: Vec<(RealVar, f64)>,
    pub constant: f64,
    pub rel: Rel,
}

impl Linear {
    pub fn new(terms: Vec<(RealVar, f64)>, constant: f64, rel: Rel) -> Self {
        Linear { terms, constant, rel }
    }

    /// `lhs - rhs = 0`
    pub fn equal(lhs: RealVar, rhs: RealVar) -> Self {
        Linear::new(vec![(lhs, 1.0), (rhs, -1.0)], 0.0, Rel::Eq)
    }

    pub fn eval(&self, value: impl Fn(RealVar) -> f64) -> f64 {
        self.terms.iter().map(|&(v, c)| c * value(v)).sum::<f64>() + self.constant
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    True,
    False,
    Bool(BoolVar),
    Not(Box<Expr>),
    And(Vec<Expr>),
    Or(Vec<Expr>),
    Linear(Linear),
    Int { var: IntVar, rel: Rel, value: i64 },
}

impl Expr {
    pub fn not(e: Expr) -> Expr {
        match e {
            Expr::True => Expr::False,
            Expr::False => Expr::True,
            Expr::Not(inner) => *inner,
            other => Expr::Not(Box::new(other)),
        }
    }

    /// Conjunction with constant folding and flattening.
    pub fn and(items: Vec<Expr>) -> Expr {
        let mut out = Vec::with_capacity(items.len());
        for item in items {
            match item {
                Expr::True => {}
                Expr::False => return Expr::False,
                Expr::And(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Expr::True,
            1 => out.pop().unwrap(),
            _ => Expr::And(out),
        }
    }

    /// Disjunction with constant folding and flattening.
    pub fn or(items: Vec<Expr>) -> Expr {
        let mut out = Vec::with_capacity(items.len());
        for item in items {
            match item {
                Expr::False => {}
                Expr::True => return Expr::True,
                Expr::Or(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Expr::False,
            1 => out.pop().unwrap(),
            _ => Expr::Or(out),
        }
    }

    pub fn implies(lhs: Expr, rhs: Expr) -> Expr {
        Expr::or(vec![Expr::not(lhs), rhs])
    }

    pub fn lin(terms: Vec<(RealVar, f64)>, constant: f64, rel: Rel) -> Expr {
        Expr::Linear(Linear::new(terms, constant, rel))
    }

    pub fn int(var: IntVar, rel: Rel, value: i64) -> Expr {
        Expr::Int { var, rel, value }
    }

    /// Evaluates the expression under a full assignment.
    pub fn eval(
        &self,
        b: &dyn Fn(BoolVar) -> bool,
        r: &dyn Fn(RealVar) -> f64,
        i: &dyn Fn(IntVar) -> i64,
    ) -> bool {
        match self {
            Expr::True => true,
            Expr::False => false,
            Expr::Bool(v) => b(*v),
            Expr::Not(e) => !e.eval(b, r, i),
            Expr::And(es) => es.iter().all(|e| e.eval(b, r, i)),
            Expr::Or(es) => es.iter().any(|e| e.eval(b, r, i)),
            Expr::Linear(l) => l.rel.holds(l.eval(r), 0.0),
            Expr::Int { var, rel, value } => rel.holds(i(*var) as f64, *value as f64),
        }
    }
}

impl From<BoolVar> for Expr {
    fn from(v: BoolVar) -> Self {
        Expr::Bool(v)
    }
}

impl fmt::Display for Rel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}
