use super::{Interval, Predicate, StlFormula};

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownVariable(String),
    /// `G`, `F` or `U` without an interval.
    Unbounded(char),
    BadInterval(f64, f64),
    NegatedUntil,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}, column {column}: {}", describe(.kind))]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

fn describe(k: &ParseErrorKind) -> String {
    match k {
        ParseErrorKind::Syntax(m) => m.clone(),
        ParseErrorKind::UnknownVariable(v) => format!("unknown variable `{v}`"),
        ParseErrorKind::Unbounded(op) => format!("`{op}` needs a bounded interval `[a, b]`"),
        ParseErrorKind::BadInterval(a, b) => format!("invalid interval [{a}, {b}]"),
        ParseErrorKind::NegatedUntil => "negation of an until has no negation normal form here".into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    LParen,
    RParen,
    LBrack,
    RBrack,
    Comma,
    And,
    Or,
    Not,
    Gt,
    Lt,
    Plus,
    Minus,
    Star,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let push = |out: &mut Vec<Token>, tok| out.push(Token { tok, line: tl, column: tc });
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v: f64 = text.parse().map_err(|_| ParseError {
                line: tl,
                column: tc,
                kind: ParseErrorKind::Syntax(format!("malformed number `{text}`")),
            })?;
            col += i - start;
            push(&mut out, Tok::Num(v));
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            push(&mut out, Tok::Ident(chars[start..i].iter().collect()));
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let (tok, len) = match (c, two.as_str()) {
            (_, "&&") => (Tok::And, 2),
            (_, "||") => (Tok::Or, 2),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            ('[', _) => (Tok::LBrack, 1),
            (']', _) => (Tok::RBrack, 1),
            (',', _) => (Tok::Comma, 1),
            ('&', _) => (Tok::And, 1),
            ('|', _) => (Tok::Or, 1),
            ('!', _) | ('~', _) => (Tok::Not, 1),
            ('>', _) => (Tok::Gt, 1),
            ('<', _) => (Tok::Lt, 1),
            ('+', _) => (Tok::Plus, 1),
            ('-', _) => (Tok::Minus, 1),
            ('*', _) => (Tok::Star, 1),
            _ => {
                return Err(ParseError {
                    line: tl,
                    column: tc,
                    kind: ParseErrorKind::Syntax(format!("unexpected character `{c}`")),
                })
            }
        };
        i += len;
        col += len;
        push(&mut out, tok);
    }
    out.push(Token { tok: Tok::Eof, line, column: col });
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    names: &'a [String],
}

/// Linear expression `Σ coeffs·r + constant`.
struct Lin {
    coeffs: Vec<f64>,
    constant: f64,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err_here(&self, kind: ParseErrorKind) -> ParseError {
        let t = &self.toks[self.pos];
        ParseError { line: t.line, column: t.column, kind }
    }

    fn syntax(&self, msg: &str) -> ParseError {
        let found = match self.peek() {
            Tok::Eof => "end of input".to_string(),
            t => format!("{t:?}"),
        };
        self.err_here(ParseErrorKind::Syntax(format!("{msg}, found {found}")))
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            Err(self.syntax(&format!("expected {what}")))
        }
    }

    /// `G`, `F` or `U` used as an operator: a keyword followed by `[`, or any
    /// of them when they are not variable names.
    fn temporal_keyword(&self, op: &str) -> bool {
        match self.peek() {
            Tok::Ident(s) if s == op => *self.peek_at(1) == Tok::LBrack || !self.names.iter().any(|n| n == op),
            _ => false,
        }
    }

    fn interval(&mut self, op: char) -> Result<Interval, ParseError> {
        if *self.peek() != Tok::LBrack {
            return Err(self.err_here(ParseErrorKind::Unbounded(op)));
        }
        let start = self.toks[self.pos].clone();
        self.bump();
        let lo = self.number()?;
        self.expect(Tok::Comma, "`,`")?;
        let hi = self.number()?;
        self.expect(Tok::RBrack, "`]`")?;
        let i = Interval::new(lo, hi);
        if !i.is_valid() {
            return Err(ParseError { line: start.line, column: start.column, kind: ParseErrorKind::BadInterval(lo, hi) });
        }
        Ok(i)
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        let neg = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        match *self.peek() {
            Tok::Num(v) => {
                self.bump();
                Ok(if neg { -v } else { v })
            }
            Tok::Ident(ref s) if s == "inf" || s == "infinity" => Err(self.err_here(ParseErrorKind::Unbounded('∞'))),
            _ => Err(self.syntax("expected a number")),
        }
    }

    fn or_expr(&mut self) -> Result<StlFormula, ParseError> {
        let mut f = self.and_expr()?;
        while *self.peek() == Tok::Or {
            self.bump();
            f = StlFormula::or(f, self.and_expr()?);
        }
        Ok(f)
    }

    fn and_expr(&mut self) -> Result<StlFormula, ParseError> {
        let mut f = self.until_expr()?;
        while *self.peek() == Tok::And {
            self.bump();
            f = StlFormula::and(f, self.until_expr()?);
        }
        Ok(f)
    }

    fn until_expr(&mut self) -> Result<StlFormula, ParseError> {
        let mut f = self.unary()?;
        while self.temporal_keyword("U") {
            self.bump();
            let i = self.interval('U')?;
            let rhs = self.unary()?;
            f = StlFormula::Until(i, Box::new(f), Box::new(rhs));
        }
        Ok(f)
    }

    fn unary(&mut self) -> Result<StlFormula, ParseError> {
        if *self.peek() == Tok::Not {
            let at = self.toks[self.pos].clone();
            self.bump();
            let inner = self.unary()?;
            return negate(inner).ok_or(ParseError {
                line: at.line,
                column: at.column,
                kind: ParseErrorKind::NegatedUntil,
            });
        }
        for (op, ch) in [("G", 'G'), ("F", 'F')] {
            if self.temporal_keyword(op) {
                self.bump();
                let i = self.interval(ch)?;
                let inner = Box::new(self.unary()?);
                return Ok(if ch == 'G' { StlFormula::Always(i, inner) } else { StlFormula::Eventually(i, inner) });
            }
        }
        if *self.peek() == Tok::LParen {
            self.bump();
            let f = self.or_expr()?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(f);
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<StlFormula, ParseError> {
        let mut lhs = self.linear()?;
        let mut parts = Vec::new();
        while matches!(self.peek(), Tok::Gt | Tok::Lt) {
            let gt = *self.peek() == Tok::Gt;
            self.bump();
            let rhs = self.linear()?;
            let (big, small) = if gt { (&lhs, &rhs) } else { (&rhs, &lhs) };
            let coeffs: Vec<f64> = big.coeffs.iter().zip(&small.coeffs).map(|(a, b)| a - b).collect();
            if coeffs.iter().all(|&c| c == 0.0) {
                return Err(self.syntax("comparison without variables"));
            }
            parts.push(StlFormula::Pred(Predicate::new(coeffs, big.constant - small.constant)));
            lhs = rhs;
        }
        if parts.is_empty() {
            return Err(self.syntax("expected `>` or `<`"));
        }
        Ok(StlFormula::all(parts))
    }

    fn linear(&mut self) -> Result<Lin, ParseError> {
        let mut lin = Lin { coeffs: vec![0.0; self.names.len()], constant: 0.0 };
        let mut sign = 1.0;
        match self.peek() {
            Tok::Minus => {
                self.bump();
                sign = -1.0;
            }
            Tok::Plus => {
                self.bump();
            }
            _ => {}
        }
        loop {
            self.term(&mut lin, sign)?;
            match self.peek() {
                Tok::Plus => sign = 1.0,
                Tok::Minus => sign = -1.0,
                _ => return Ok(lin),
            }
            self.bump();
        }
    }

    fn term(&mut self, lin: &mut Lin, sign: f64) -> Result<(), ParseError> {
        let coef = match *self.peek() {
            Tok::Num(v) => {
                self.bump();
                if *self.peek() != Tok::Star {
                    lin.constant += sign * v;
                    return Ok(());
                }
                self.bump();
                v
            }
            _ => 1.0,
        };
        let t = self.toks[self.pos].clone();
        match t.tok {
            Tok::Ident(ref name) => match self.names.iter().position(|n| n == name) {
                Some(idx) => {
                    self.bump();
                    lin.coeffs[idx] += sign * coef;
                    Ok(())
                }
                None if (name == "G" || name == "F" || name == "U") && *self.peek_at(1) != Tok::LBrack => {
                    Err(self.err_here(ParseErrorKind::Unbounded(name.chars().next().unwrap())))
                }
                None => Err(ParseError {
                    line: t.line,
                    column: t.column,
                    kind: ParseErrorKind::UnknownVariable(name.clone()),
                }),
            },
            _ => Err(self.syntax("expected a number or variable")),
        }
    }
}

/// Pushes a negation to the predicates; `None` for an until.
fn negate(f: StlFormula) -> Option<StlFormula> {
    Some(match f {
        StlFormula::Pred(p) => StlFormula::NegPred(p),
        StlFormula::NegPred(p) => StlFormula::Pred(p),
        StlFormula::And(a, b) => StlFormula::or(negate(*a)?, negate(*b)?),
        StlFormula::Or(a, b) => StlFormula::and(negate(*a)?, negate(*b)?),
        StlFormula::Always(i, a) => StlFormula::Eventually(i, Box::new(negate(*a)?)),
        StlFormula::Eventually(i, a) => StlFormula::Always(i, Box::new(negate(*a)?)),
        StlFormula::Until(..) => return None,
    })
}

/// Parses a formula over the named components of `r = (x, u)`.
///
/// Grammar, loosest first: `|`, `&`, infix `U[a,b]`, then prefix `!`,
/// `G[a,b]`, `F[a,b]`. Atoms are chains of linear comparisons such as
/// `0 < x < 30` or `2*x - y > 1`. `#` starts a comment.
pub fn parse_formula(src: &str, names: &[String]) -> Result<StlFormula, ParseError> {
    let mut p = Parser { toks: lex(src)?, pos: 0, names };
    let f = p.or_expr()?;
    if *p.peek() != Tok::Eof {
        return Err(p.syntax("unexpected trailing input"));
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn less_than_flips_coefficients() {
        let f = parse_formula("x < 30", &names(&["x", "y"])).unwrap();
        assert_eq!(f, StlFormula::Pred(Predicate::new(vec![-1.0, 0.0], 30.0)));
    }

    #[test]
    fn precedence_and_chains() {
        let n = names(&["x"]);
        let f = parse_formula("G[0,2] x > 0 & 0 < x < 3 | x > 9", &n).unwrap();
        let gt0 = StlFormula::Pred(Predicate::new(vec![1.0], 0.0));
        let lt3 = StlFormula::Pred(Predicate::new(vec![-1.0], 3.0));
        let gt9 = StlFormula::Pred(Predicate::new(vec![1.0], -9.0));
        let expected = StlFormula::or(
            StlFormula::and(StlFormula::always(0.0, 2.0, gt0.clone()), StlFormula::and(gt0, lt3)),
            gt9,
        );
        assert_eq!(f, expected);
    }

    #[test]
    fn negation_reaches_predicates() {
        let n = names(&["x"]);
        let f = parse_formula("!G[0,1](x > 0 | x < -1)", &n).unwrap();
        let expected = StlFormula::eventually(
            0.0,
            1.0,
            StlFormula::and(
                StlFormula::NegPred(Predicate::new(vec![1.0], 0.0)),
                StlFormula::NegPred(Predicate::new(vec![-1.0], -1.0)),
            ),
        );
        assert_eq!(f, expected);
        let e = parse_formula("!(x > 0 U[0,1] x > 1)", &n).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::NegatedUntil);
    }

    #[test]
    fn errors_carry_positions() {
        let n = names(&["x"]);
        let e = parse_formula("x > 0 &\n  y > 1", &n).unwrap_err();
        assert_eq!((e.line, e.column), (2, 3));
        assert_eq!(e.kind, ParseErrorKind::UnknownVariable("y".into()));
        let e = parse_formula("G x > 0", &n).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::Unbounded('G'));
        let e = parse_formula("x > 0 U x > 1", &n).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::Unbounded('U'));
        let e = parse_formula("F[3,1] x > 0", &n).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::BadInterval(3.0, 1.0));
        assert!(parse_formula("x > 0)", &n).is_err());
    }

    #[test]
    fn until_is_left_associative_and_binds_tighter_than_and() {
        let n = names(&["x"]);
        let a = || StlFormula::Pred(Predicate::new(vec![1.0], 0.0));
        let f = parse_formula("x > 0 U[0,1] x > 0 U[0,2] x > 0 & x > 0", &n).unwrap();
        let expected = StlFormula::and(StlFormula::until(0.0, 2.0, StlFormula::until(0.0, 1.0, a(), a()), a()), a());
        assert_eq!(f, expected);
    }
}
