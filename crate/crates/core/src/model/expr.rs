//! Tiny arithmetic language for user-defined jump rates.
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | atom
//! atom  := number | '|x|' | '|v|' | ('sin' | 'cos') '(' expr ')' | '(' expr ')'
//! ```
//!
//! Expressions are checked for boundedness by interval evaluation over
//! `|x|, |v| in [0, inf)`.

use std::f64::consts::{PI, TAU};
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    NormX,
    NormV,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(parse_err(format!("unexpected trailing token {:?}", p.tokens[p.pos])));
        }
        Ok(e)
    }

    pub fn eval(&self, nx: f64, nv: f64) -> f64 {
        match self {
            Self::Const(c) => *c,
            Self::NormX => nx,
            Self::NormV => nv,
            Self::Neg(a) => -a.eval(nx, nv),
            Self::Add(a, b) => a.eval(nx, nv) + b.eval(nx, nv),
            Self::Sub(a, b) => a.eval(nx, nv) - b.eval(nx, nv),
            Self::Mul(a, b) => a.eval(nx, nv) * b.eval(nx, nv),
            Self::Div(a, b) => a.eval(nx, nv) / b.eval(nx, nv),
            Self::Sin(a) => a.eval(nx, nv).sin(),
            Self::Cos(a) => a.eval(nx, nv).cos(),
        }
    }

    /// Enclosure of the expression's range for `|x| in nx`, `|v| in nv`.
    pub fn range(&self, nx: Interval, nv: Interval) -> Interval {
        match self {
            Self::Const(c) => Interval::point(*c),
            Self::NormX => nx,
            Self::NormV => nv,
            Self::Neg(a) => a.range(nx, nv).neg(),
            Self::Add(a, b) => a.range(nx, nv).add(b.range(nx, nv)),
            Self::Sub(a, b) => a.range(nx, nv).add(b.range(nx, nv).neg()),
            Self::Mul(a, b) => a.range(nx, nv).mul(b.range(nx, nv)),
            Self::Div(a, b) => a.range(nx, nv).div(b.range(nx, nv)),
            Self::Sin(a) => a.range(nx, nv).sin(),
            Self::Cos(a) => a.range(nx, nv).add(Interval::point(PI / 2.0)).sin(),
        }
    }

    /// Range over the whole state space.
    pub fn global_range(&self) -> Interval {
        let half_line = Interval { lo: 0.0, hi: f64::INFINITY };
        self.range(half_line, half_line)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Const(c) => write!(f, "{c}"),
            Self::NormX => write!(f, "|x|"),
            Self::NormV => write!(f, "|v|"),
            Self::Neg(a) => write!(f, "-({a})"),
            Self::Add(a, b) => write!(f, "({a} + {b})"),
            Self::Sub(a, b) => write!(f, "({a} - {b})"),
            Self::Mul(a, b) => write!(f, "({a} * {b})"),
            Self::Div(a, b) => write!(f, "({a} / {b})"),
            Self::Sin(a) => write!(f, "sin({a})"),
            Self::Cos(a) => write!(f, "cos({a})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

const WHOLE: Interval = Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY };

/// Product with the convention `0 * inf = 0`.
fn mul0(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

impl Interval {
    pub fn point(c: f64) -> Self {
        Self { lo: c, hi: c }
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    fn neg(self) -> Self {
        Self { lo: -self.hi, hi: -self.lo }
    }

    fn add(self, o: Self) -> Self {
        let lo = self.lo + o.lo;
        let hi = self.hi + o.hi;
        if lo.is_nan() || hi.is_nan() {
            WHOLE
        } else {
            Self { lo, hi }
        }
    }

    fn mul(self, o: Self) -> Self {
        let c = [
            mul0(self.lo, o.lo),
            mul0(self.lo, o.hi),
            mul0(self.hi, o.lo),
            mul0(self.hi, o.hi),
        ];
        Self {
            lo: c.iter().copied().fold(f64::INFINITY, f64::min),
            hi: c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    fn div(self, o: Self) -> Self {
        if o.lo <= 0.0 && o.hi >= 0.0 {
            return WHOLE;
        }
        self.mul(Self { lo: 1.0 / o.hi, hi: 1.0 / o.lo })
    }

    fn sin(self) -> Self {
        if !self.is_bounded() || self.hi - self.lo >= TAU {
            return Self { lo: -1.0, hi: 1.0 };
        }
        let mut lo = self.lo.sin().min(self.hi.sin());
        let mut hi = self.lo.sin().max(self.hi.sin());
        // Interior extrema at pi/2 + k pi.
        let k0 = ((self.lo - PI / 2.0) / PI).ceil() as i64;
        let k1 = ((self.hi - PI / 2.0) / PI).floor() as i64;
        for k in k0..=k1 {
            if k.rem_euclid(2) == 0 {
                hi = 1.0;
            } else {
                lo = -1.0;
            }
        }
        Self { lo, hi }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    NormX,
    NormV,
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn parse_err(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(format!("rate expression: {}", msg.into()))
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\n' => i += 1,
            '+' | '-' | '*' | '/' => {
                out.push(Token::Op(c));
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
            '|' => {
                let word: String = chars[i..chars.len().min(i + 3)].iter().collect();
                match word.as_str() {
                    "|x|" => out.push(Token::NormX),
                    "|v|" => out.push(Token::NormV),
                    _ => return Err(parse_err(format!("unknown norm at offset {i}"))),
                }
                i += 3;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    i += 1;
                    if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                        i += 1;
                    }
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                let s: String = chars[start..i].iter().collect();
                let v = s.parse::<f64>().map_err(|_| parse_err(format!("bad number {s:?}")))?;
                out.push(Token::Num(v));
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_alphabetic() {
                    i += 1;
                }
                out.push(Token::Ident(chars[start..i].iter().collect()));
            }
            other => return Err(parse_err(format!("unexpected character {other:?}"))),
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

    fn expect(&mut self, t: Token) -> Result<()> {
        match self.next() {
            Some(ref got) if *got == t => Ok(()),
            got => Err(parse_err(format!("expected {t:?}, found {got:?}"))),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if let Some(Token::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Token::Num(v)) => Ok(Expr::Const(v)),
            Some(Token::NormX) => Ok(Expr::NormX),
            Some(Token::NormV) => Ok(Expr::NormV),
            Some(Token::LParen) => {
                let e = self.expr()?;
                self.expect(Token::RParen)?;
                Ok(e)
            }
            Some(Token::Ident(name)) => {
                self.expect(Token::LParen)?;
                let arg = Box::new(self.expr()?);
                self.expect(Token::RParen)?;
                match name.as_str() {
                    "sin" => Ok(Expr::Sin(arg)),
                    "cos" => Ok(Expr::Cos(arg)),
                    _ => Err(parse_err(format!("unknown function {name:?}"))),
                }
            }
            other => Err(parse_err(format!("unexpected token {other:?}"))),
        }
    }
}
