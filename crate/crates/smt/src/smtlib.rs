//! External solver process speaking SMT-LIB2 over stdin/stdout.

use crate::expr::{BoolVar, Expr, IntVar, Linear, RealVar, Rel};
use crate::{SatResult, SmtError, Solver};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

pub struct SmtLibProcess {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    bools: Vec<String>,
    reals: Vec<String>,
    ints: Vec<String>,
    depth: usize,
    has_model: bool,
    transcript: Option<String>,
}

impl SmtLibProcess {
    /// Spawns `program args...` and configures QF_LIRA with model production.
    pub fn spawn(program: &str, args: &[String]) -> Result<Self, SmtError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| SmtError::Spawn(format!("{program}: {e}")))?;
        let stdin = child.stdin.take().ok_or_else(|| SmtError::Spawn("no stdin".into()))?;
        let stdout = BufReader::new(child.stdout.take().ok_or_else(|| SmtError::Spawn("no stdout".into()))?);
        let mut p = SmtLibProcess {
            child,
            stdin,
            stdout,
            bools: Vec::new(),
            reals: Vec::new(),
            ints: Vec::new(),
            depth: 0,
            has_model: false,
            transcript: None,
        };
        p.send("(set-option :produce-models true)")?;
        p.send("(set-logic QF_LIRA)")?;
        Ok(p)
    }

    /// Keeps a copy of every command sent, for debugging.
    pub fn record_transcript(&mut self) {
        self.transcript = Some(String::new());
    }

    pub fn transcript(&self) -> Option<&str> {
        self.transcript.as_deref()
    }

    fn send(&mut self, cmd: &str) -> Result<(), SmtError> {
        if let Some(t) = &mut self.transcript {
            t.push_str(cmd);
            t.push('\n');
        }
        writeln!(self.stdin, "{cmd}").map_err(SmtError::Io)
    }

    fn read_sexpr(&mut self) -> Result<String, SmtError> {
        let mut out = String::new();
        let mut depth = 0i64;
        loop {
            let mut line = String::new();
            let n = self.stdout.read_line(&mut line).map_err(SmtError::Io)?;
            if n == 0 {
                return Err(SmtError::Protocol("solver closed its output".into()));
            }
            for ch in line.chars() {
                match ch {
                    '(' => depth += 1,
                    ')' => depth -= 1,
                    _ => {}
                }
            }
            out.push_str(&line);
            if depth <= 0 && !out.trim().is_empty() {
                return Ok(out.trim().to_string());
            }
        }
    }

    fn declare(&mut self, prefix: &str, name: &str, sort: &str, index: usize) -> Result<String, SmtError> {
        let clean: String = name
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
            .collect();
        let id = format!("{prefix}{index}_{clean}");
        self.send(&format!("(declare-const {id} {sort})"))?;
        Ok(id)
    }

    fn term(&self, e: &Expr, out: &mut String) -> Result<(), SmtError> {
        match e {
            Expr::True => out.push_str("true"),
            Expr::False => out.push_str("false"),
            Expr::Bool(v) => out.push_str(self.name(&self.bools, v.index())?),
            Expr::Not(x) => {
                out.push_str("(not ");
                self.term(x, out)?;
                out.push(')');
            }
            Expr::And(xs) | Expr::Or(xs) => {
                out.push_str(if matches!(e, Expr::And(_)) { "(and" } else { "(or" });
                for x in xs {
                    out.push(' ');
                    self.term(x, out)?;
                }
                if xs.is_empty() {
                    out.push_str(if matches!(e, Expr::And(_)) { " true" } else { " false" });
                }
                out.push(')');
            }
            Expr::Linear(l) => self.linear(l, out)?,
            Expr::Int { var, rel, value } => {
                let name = self.name(&self.ints, var.index())?;
                let v = if *value < 0 { format!("(- {})", value.unsigned_abs()) } else { value.to_string() };
                let _ = write!(out, "({} {} {})", rel_symbol(*rel), name, v);
            }
        }
        Ok(())
    }

    fn linear(&self, l: &Linear, out: &mut String) -> Result<(), SmtError> {
        let _ = write!(out, "({} (+", rel_symbol(l.rel));
        for &(v, c) in &l.terms {
            let _ = write!(out, " (* {} {})", real_literal(c)?, self.name(&self.reals, v.index())?);
        }
        let _ = write!(out, " {}) 0.0)", real_literal(l.constant)?);
        Ok(())
    }

    fn name<'a>(&self, names: &'a [String], i: usize) -> Result<&'a str, SmtError> {
        names
            .get(i)
            .map(|s| s.as_str())
            .ok_or_else(|| SmtError::InvalidTerm(format!("undeclared variable {i}")))
    }

    fn get_values(&mut self, names: &[String]) -> Result<Vec<Value>, SmtError> {
        if !self.has_model {
            return Err(SmtError::NoModel);
        }
        if names.is_empty() {
            return Ok(Vec::new());
        }
        self.send(&format!("(get-value ({}))", names.join(" ")))?;
        self.stdin.flush().map_err(SmtError::Io)?;
        let text = self.read_sexpr()?;
        let sx = parse_sexpr(&text)?;
        let pairs = match sx {
            Sexpr::List(items) => items,
            _ => return Err(SmtError::Protocol(format!("unexpected get-value reply: {text}"))),
        };
        if pairs.len() != names.len() {
            return Err(SmtError::Protocol(format!("expected {} values, got {text}", names.len())));
        }
        pairs
            .iter()
            .map(|p| match p {
                Sexpr::List(kv) if kv.len() == 2 => value_of(&kv[1]),
                _ => Err(SmtError::Protocol(format!("malformed value pair in {text}"))),
            })
            .collect()
    }
}

impl Drop for SmtLibProcess {
    fn drop(&mut self) {
        let _ = writeln!(self.stdin, "(exit)");
        let _ = self.stdin.flush();
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn rel_symbol(r: Rel) -> &'static str {
    r.symbol()
}

/// Exact decimal-free rendering of an f64 as an SMT-LIB real term.
pub fn real_literal(x: f64) -> Result<String, SmtError> {
    let q = BigRational::from_float(x).ok_or_else(|| SmtError::InvalidTerm(format!("non-finite value {x}")))?;
    let neg = q.is_negative();
    let q = q.abs();
    let body = if q.denom() == &BigInt::from(1) {
        format!("{}.0", q.numer())
    } else {
        format!("(/ {}.0 {}.0)", q.numer(), q.denom())
    };
    Ok(if neg { format!("(- {body})") } else { body })
}

#[derive(Debug, Clone, PartialEq)]
enum Sexpr {
    Atom(String),
    List(Vec<Sexpr>),
}

fn parse_sexpr(text: &str) -> Result<Sexpr, SmtError> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        match ch {
            '(' | ')' => {
                if !cur.is_empty() {
                    tokens.push(std::mem::take(&mut cur));
                }
                tokens.push(ch.to_string());
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    tokens.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    let mut pos = 0;
    let sx = parse_tokens(&tokens, &mut pos)?;
    Ok(sx)
}

fn parse_tokens(tokens: &[String], pos: &mut usize) -> Result<Sexpr, SmtError> {
    let tok = tokens
        .get(*pos)
        .ok_or_else(|| SmtError::Protocol("unexpected end of s-expression".into()))?;
    *pos += 1;
    if tok == "(" {
        let mut items = Vec::new();
        loop {
            match tokens.get(*pos) {
                Some(t) if t == ")" => {
                    *pos += 1;
                    return Ok(Sexpr::List(items));
                }
                Some(_) => items.push(parse_tokens(tokens, pos)?),
                None => return Err(SmtError::Protocol("unbalanced s-expression".into())),
            }
        }
    } else if tok == ")" {
        Err(SmtError::Protocol("unexpected ')'".into()))
    } else {
        Ok(Sexpr::Atom(tok.clone()))
    }
}

enum Value {
    Bool(bool),
    Num(BigRational),
}

fn decimal(text: &str) -> Option<BigRational> {
    let (int, frac) = match text.split_once('.') {
        Some((a, b)) => (a, b),
        None => (text, ""),
    };
    if int.is_empty() || !int.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("{int}{frac}").parse().ok()?;
    let denom = num_traits::pow(BigInt::from(10), frac.len());
    Some(BigRational::new(digits, denom))
}

fn value_of(sx: &Sexpr) -> Result<Value, SmtError> {
    let bad = || SmtError::Protocol(format!("unsupported value term {sx:?}"));
    match sx {
        Sexpr::Atom(a) if a == "true" => Ok(Value::Bool(true)),
        Sexpr::Atom(a) if a == "false" => Ok(Value::Bool(false)),
        Sexpr::Atom(a) => decimal(a).map(Value::Num).ok_or_else(bad),
        Sexpr::List(items) => {
            let head = match items.first() {
                Some(Sexpr::Atom(h)) => h.as_str(),
                _ => return Err(bad()),
            };
            let num = |x: &Sexpr| match value_of(x)? {
                Value::Num(q) => Ok(q),
                Value::Bool(_) => Err(bad()),
            };
            match (head, items.len()) {
                ("-", 2) => Ok(Value::Num(-num(&items[1])?)),
                ("/", 3) => {
                    let d = num(&items[2])?;
                    if d.is_zero() {
                        return Err(bad());
                    }
                    Ok(Value::Num(num(&items[1])? / d))
                }
                _ => Err(bad()),
            }
        }
    }
}

impl Solver for SmtLibProcess {
    fn new_bool(&mut self, name: &str) -> Result<BoolVar, SmtError> {
        let id = self.declare("b", name, "Bool", self.bools.len())?;
        self.bools.push(id);
        Ok(BoolVar(self.bools.len() as u32 - 1))
    }

    fn new_real(&mut self, name: &str) -> Result<RealVar, SmtError> {
        let id = self.declare("r", name, "Real", self.reals.len())?;
        self.reals.push(id);
        Ok(RealVar(self.reals.len() as u32 - 1))
    }

    fn new_int(&mut self, name: &str) -> Result<IntVar, SmtError> {
        let id = self.declare("i", name, "Int", self.ints.len())?;
        self.ints.push(id);
        Ok(IntVar(self.ints.len() as u32 - 1))
    }

    fn assert(&mut self, e: &Expr) -> Result<(), SmtError> {
        self.has_model = false;
        let mut s = String::from("(assert ");
        self.term(e, &mut s)?;
        s.push(')');
        self.send(&s)
    }

    fn push(&mut self) -> Result<(), SmtError> {
        self.has_model = false;
        self.depth += 1;
        self.send("(push 1)")
    }

    fn pop(&mut self) -> Result<(), SmtError> {
        if self.depth == 0 {
            return Err(SmtError::PopEmpty);
        }
        self.has_model = false;
        self.depth -= 1;
        self.send("(pop 1)")
    }

    fn check(&mut self) -> Result<SatResult, SmtError> {
        self.send("(check-sat)")?;
        self.stdin.flush().map_err(SmtError::Io)?;
        let reply = self.read_sexpr()?;
        match reply.as_str() {
            "sat" => {
                self.has_model = true;
                Ok(SatResult::Sat)
            }
            "unsat" => {
                self.has_model = false;
                Ok(SatResult::Unsat)
            }
            other => Err(SmtError::Unknown(other.to_string())),
        }
    }

    fn real_values(&mut self, vars: &[RealVar]) -> Result<Vec<f64>, SmtError> {
        let names = vars
            .iter()
            .map(|v| self.name(&self.reals, v.index()).map(str::to_string))
            .collect::<Result<Vec<_>, _>>()?;
        self.get_values(&names)?
            .into_iter()
            .map(|v| match v {
                Value::Num(q) => q.to_f64().ok_or_else(|| SmtError::Protocol("value out of range".into())),
                Value::Bool(_) => Err(SmtError::Protocol("expected a real value".into())),
            })
            .collect()
    }

    fn int_value(&mut self, v: IntVar) -> Result<i64, SmtError> {
        let name = self.name(&self.ints, v.index())?.to_string();
        match self.get_values(&[name])?.pop() {
            Some(Value::Num(q)) if q.is_integer() => {
                q.to_integer().to_i64().ok_or_else(|| SmtError::Protocol("int out of range".into()))
            }
            _ => Err(SmtError::Protocol("expected an integer value".into())),
        }
    }

    fn bool_value(&mut self, v: BoolVar) -> Result<bool, SmtError> {
        let name = self.name(&self.bools, v.index())?.to_string();
        match self.get_values(&[name])?.pop() {
            Some(Value::Bool(b)) => Ok(b),
            _ => Err(SmtError::Protocol("expected a Boolean value".into())),
        }
    }

    fn depth(&self) -> usize {
        self.depth
    }

    fn backend_name(&self) -> &'static str {
        "smtlib"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literals_are_exact() {
        assert_eq!(real_literal(2.0).unwrap(), "2.0");
        assert_eq!(real_literal(-0.5).unwrap(), "(- (/ 1.0 2.0))");
        assert_eq!(real_literal(22.5).unwrap(), "(/ 45.0 2.0)");
    }

    #[test]
    fn parses_model_values() {
        let sx = parse_sexpr("((x (- (/ 1.0 3.0))) (y 2.5) (b true))").unwrap();
        let Sexpr::List(items) = sx else { panic!() };
        let vals: Vec<Value> = items
            .iter()
            .map(|p| match p {
                Sexpr::List(kv) => value_of(&kv[1]).unwrap(),
                _ => panic!(),
            })
            .collect();
        match &vals[0] {
            Value::Num(q) => assert_eq!(q.to_f64().unwrap(), -1.0 / 3.0),
            _ => panic!(),
        }
        match &vals[1] {
            Value::Num(q) => assert_eq!(q.to_f64().unwrap(), 2.5),
            _ => panic!(),
        }
        assert!(matches!(vals[2], Value::Bool(true)));
    }
}
