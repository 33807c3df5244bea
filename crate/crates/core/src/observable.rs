//! Observables: a small expression language over `y`, named builtins, and
//! coboundaries `f o T - f`.
//!
//! Grammar (`^` and `**` are right associative, `−` is accepted for `-`):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := ('+' | '-') unary | power
//! power := atom (('^' | '**') unary)?
//! atom  := number | 'y' | 'pi' | 'e' | 'c' | func '(' expr ')' | '(' expr ')'
//! func  := cos | sin | tan | exp | log | ln | sqrt | abs
//! ```
//!
//! The symbol `c` denotes the constant that centers the observable with
//! respect to the invariant measure; the expression must be affine in `c`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::function_space::{GridFunction, MeasureDensity};
use crate::maps::IntervalMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Cos,
    Sin,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Func {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "cos" => Func::Cos,
            "sin" => Func::Sin,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" | "ln" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn eval(self, x: f64) -> f64 {
        match self {
            Func::Cos => x.cos(),
            Func::Sin => x.sin(),
            Func::Tan => x.tan(),
            Func::Exp => x.exp(),
            Func::Log => x.ln(),
            Func::Sqrt => x.sqrt(),
            Func::Abs => x.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Num(f64),
    Y,
    C,
    Neg(Box<Expr>),
    Bin(char, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    fn eval(&self, y: f64, c: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Y => y,
            Expr::C => c,
            Expr::Neg(a) => -a.eval(y, c),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(y, c), b.eval(y, c));
                match op {
                    '+' => a + b,
                    '-' => a - b,
                    '*' => a * b,
                    '/' => a / b,
                    _ => a.powf(b),
                }
            }
            Expr::Call(f, a) => f.eval(a.eval(y, c)),
        }
    }

    fn uses_c(&self) -> bool {
        match self {
            Expr::C => true,
            Expr::Num(_) | Expr::Y => false,
            Expr::Neg(a) | Expr::Call(_, a) => a.uses_c(),
            Expr::Bin(_, a, b) => a.uses_c() || b.uses_c(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        match ch {
            _ if ch.is_whitespace() => i += 1,
            '0'..='9' | '.' => {
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
                let v = text
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad number '{text}'")))?;
                out.push(Token::Num(v));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Token::Ident(chars[start..i].iter().collect()));
            }
            '*' if chars.get(i + 1) == Some(&'*') => {
                out.push(Token::Op('^'));
                i += 2;
            }
            '+' | '-' | '*' | '/' | '^' => {
                out.push(Token::Op(ch));
                i += 1;
            }
            '\u{2212}' => {
                out.push(Token::Op('-'));
                i += 1;
            }
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            _ => return Err(Error::Parse(format!("unexpected character '{ch}'"))),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn peek_op(&self, ops: &[char]) -> Option<char> {
        match self.peek() {
            Some(Token::Op(c)) if ops.contains(c) => Some(*c),
            _ => None,
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(op) = self.peek_op(&['+', '-']) {
            self.pos += 1;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.peek_op(&['*', '/']) {
            self.pos += 1;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek_op(&['+', '-']) {
            Some('-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some(_) => {
                self.pos += 1;
                self.unary()
            }
            None => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek_op(&['^']).is_some() {
            self.pos += 1;
            return Ok(Expr::Bin('^', Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Token::Num(v)) => Ok(Expr::Num(v)),
            Some(Token::LParen) => {
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Some(Token::Ident(name)) => match name.as_str() {
                "y" | "x" => Ok(Expr::Y),
                "c" => Ok(Expr::C),
                "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                "e" => Ok(Expr::Num(std::f64::consts::E)),
                _ => {
                    let f = Func::parse(&name)
                        .ok_or_else(|| Error::Parse(format!("unknown identifier '{name}'")))?;
                    if self.next() != Some(Token::LParen) {
                        return Err(Error::Parse(format!("expected '(' after '{name}'")));
                    }
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    Ok(Expr::Call(f, Box::new(arg)))
                }
            },
            Some(t) => Err(Error::Parse(format!("unexpected token {t:?}"))),
            None => Err(Error::Parse("unexpected end of expression".to_string())),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        match self.next() {
            Some(Token::RParen) => Ok(()),
            _ => Err(Error::Parse("expected ')'".to_string())),
        }
    }
}

fn parse_expr(src: &str) -> Result<Expr> {
    let mut p = Parser {
        tokens: tokenize(src)?,
        pos: 0,
    };
    let e = p.expr()?;
    if p.pos != p.tokens.len() {
        return Err(Error::Parse(format!("trailing input in '{src}'")));
    }
    Ok(e)
}

/// Expansions of the named builtins.
pub const BUILTINS: [(&str, &str); 6] = [
    ("cos1", "cos(2*pi*y)"),
    ("cos2", "cos(4*pi*y)"),
    ("sin1", "sin(2*pi*y)"),
    ("lip1", "y"),
    ("hol1", "sqrt(abs(y - 0.5))"),
    ("zero", "0"),
];

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Expr(Expr),
    /// `f o T - f` for the inner observable `f`.
    Coboundary(Box<Observable>),
}

/// An uncentered observable as parsed from a spec string.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    spec: String,
    kind: Kind,
}

impl Observable {
    /// Parses a builtin name, `coboundary:<spec>`, or an expression.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if let Some(inner) = spec.strip_prefix("coboundary:") {
            let inner = Observable::parse(inner)?;
            if inner.uses_c() {
                return Err(Error::Parse("'c' is not allowed inside a coboundary".to_string()));
            }
            return Ok(Self {
                spec: spec.to_string(),
                kind: Kind::Coboundary(Box::new(inner)),
            });
        }
        let src = BUILTINS
            .iter()
            .find(|(name, _)| *name == spec)
            .map_or(spec, |(_, e)| e);
        Ok(Self {
            spec: spec.to_string(),
            kind: Kind::Expr(parse_expr(src)?),
        })
    }

    pub fn spec(&self) -> &str {
        &self.spec
    }

    fn uses_c(&self) -> bool {
        match &self.kind {
            Kind::Expr(e) => e.uses_c(),
            Kind::Coboundary(_) => false,
        }
    }

    fn eval_raw(&self, map: &IntervalMap, y: f64, c: f64) -> f64 {
        match &self.kind {
            Kind::Expr(e) => e.eval(y, c),
            Kind::Coboundary(f) => f.eval_raw(map, map.apply(y), 0.0) - f.eval_raw(map, y, 0.0),
        }
    }

    /// Fixes `c` and the centering shift against `measure`.
    pub fn bind(&self, map: &IntervalMap, measure: &Arc<MeasureDensity>) -> Result<BoundObservable> {
        let mean = |c: f64| -> Result<f64> {
            GridFunction::from_fn(measure.clone(), |y| self.eval_raw(map, y, c))?.integrate()
        };
        let m0 = mean(0.0)?;
        let c = if self.uses_c() {
            let m1 = mean(1.0)?;
            let m2 = mean(2.0)?;
            let slope = m1 - m0;
            if slope.abs() < 1e-12 {
                return Err(Error::Parse(format!("'c' has no effect on the mean of '{}'", self.spec)));
            }
            if ((m2 - m1) - slope).abs() > 1e-9 * (1.0 + slope.abs()) {
                return Err(Error::Parse(format!("'{}' is not affine in 'c'", self.spec)));
            }
            -m0 / slope
        } else {
            0.0
        };
        let shift = if self.uses_c() { mean(c)? } else { m0 };
        Ok(BoundObservable {
            observable: self.clone(),
            map: map.clone(),
            c,
            shift,
            raw_mean: m0,
        })
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.spec)
    }
}

/// An observable centered against a specific invariant measure.
#[derive(Debug, Clone)]
pub struct BoundObservable {
    observable: Observable,
    map: IntervalMap,
    c: f64,
    shift: f64,
    raw_mean: f64,
}

impl BoundObservable {
    pub fn spec(&self) -> &str {
        self.observable.spec()
    }

    /// Value used for `c`, zero when the expression does not mention it.
    pub fn c(&self) -> f64 {
        self.c
    }

    /// Constant subtracted to center the observable.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Mean of the expression before `c` and centering were applied.
    pub fn raw_mean(&self) -> f64 {
        self.raw_mean
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.observable.eval_raw(&self.map, y, self.c) - self.shift
    }

    pub fn on_grid(&self, measure: Arc<MeasureDensity>) -> Result<GridFunction> {
        GridFunction::from_fn(measure, |y| self.eval(y))
    }
}
