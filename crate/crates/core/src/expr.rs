//! Boundary-data expressions.
//!
//! Grammar, lowest precedence first:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' exponent)*
//! atom    := number | 'x' | 'y' | func '(' sum (',' sum)* ')' | '(' sum ')'
//! func    := 'abs' | 'min' | 'max'
//! ```
//!
//! `^` binds tighter than unary minus, so `-x^2` is `-(x^2)`. Exponents must
//! be constant non-negative integers.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expression {
    Num(f64),
    X,
    Y,
    Neg(Box<Expression>),
    Add(Box<Expression>, Box<Expression>),
    Sub(Box<Expression>, Box<Expression>),
    Mul(Box<Expression>, Box<Expression>),
    Div(Box<Expression>, Box<Expression>),
    Pow(Box<Expression>, u32),
    Abs(Box<Expression>),
    Min(Vec<Expression>),
    Max(Vec<Expression>),
}

impl Expression {
    /// Evaluates at `(x, y)`. One-dimensional callers pass `y = 0`.
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        let v = self.eval_raw(x, y)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Eval {
                x,
                y,
                message: format!("result is not finite ({v})"),
            })
        }
    }

    fn eval_raw(&self, x: f64, y: f64) -> Result<f64> {
        use Expression::*;
        Ok(match self {
            Num(v) => *v,
            X => x,
            Y => y,
            Neg(a) => -a.eval_raw(x, y)?,
            Add(a, b) => a.eval_raw(x, y)? + b.eval_raw(x, y)?,
            Sub(a, b) => a.eval_raw(x, y)? - b.eval_raw(x, y)?,
            Mul(a, b) => a.eval_raw(x, y)? * b.eval_raw(x, y)?,
            Div(a, b) => {
                let d = b.eval_raw(x, y)?;
                if d == 0.0 {
                    return Err(Error::Eval {
                        x,
                        y,
                        message: "division by zero".into(),
                    });
                }
                a.eval_raw(x, y)? / d
            }
            Pow(a, n) => a.eval_raw(x, y)?.powi(*n as i32),
            Abs(a) => a.eval_raw(x, y)?.abs(),
            Min(args) => {
                let mut m = f64::INFINITY;
                for a in args {
                    m = m.min(a.eval_raw(x, y)?);
                }
                m
            }
            Max(args) => {
                let mut m = f64::NEG_INFINITY;
                for a in args {
                    m = m.max(a.eval_raw(x, y)?);
                }
                m
            }
        })
    }

    /// True if the expression mentions neither `x` nor `y`.
    pub fn is_constant(&self) -> bool {
        use Expression::*;
        match self {
            Num(_) => true,
            X | Y => false,
            Neg(a) | Pow(a, _) | Abs(a) => a.is_constant(),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => a.is_constant() && b.is_constant(),
            Min(args) | Max(args) => args.iter().all(Expression::is_constant),
        }
    }

    /// True if the expression mentions `y`.
    pub fn uses_y(&self) -> bool {
        use Expression::*;
        match self {
            Num(_) | X => false,
            Y => true,
            Neg(a) | Pow(a, _) | Abs(a) => a.uses_y(),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => a.uses_y() || b.uses_y(),
            Min(args) | Max(args) => args.iter().any(Expression::uses_y),
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Expression::*;
        match self {
            Num(v) => write!(f, "{v}"),
            X => f.write_str("x"),
            Y => f.write_str("y"),
            Neg(a) => write!(f, "(-{a})"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "({a} * {b})"),
            Div(a, b) => write!(f, "({a} / {b})"),
            Pow(a, n) => write!(f, "({a}^{n})"),
            Abs(a) => write!(f, "abs({a})"),
            Min(args) | Max(args) => {
                f.write_str(if matches!(self, Min(_)) {
                    "min("
                } else {
                    "max("
                })?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl std::str::FromStr for Expression {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_expr(s)
    }
}

/// Parses `src` into an [`Expression`].
///
/// Errors carry the byte offset of the offending token together with its
/// 1-based line and column.
pub fn parse_expr(src: &str) -> Result<Expression> {
    let tokens = lex(src)?;
    let mut p = Parser {
        src,
        tokens,
        pos: 0,
    };
    let e = p.sum()?;
    match p.peek() {
        Tok::End => Ok(e),
        t => Err(p.error_here(format!("unexpected {}", t.describe()))),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Caret => "'^'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn located(src: &str, offset: usize, message: String) -> Error {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    Error::Parse {
        offset,
        line,
        column,
        message,
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let v: f64 = text
                    .parse()
                    .map_err(|_| located(src, start, format!("malformed number '{text}'")))?;
                out.push((Tok::Num(v), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(src[start..i].to_string()), start));
                continue;
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(located(src, start, format!("unexpected character '{ch}'")));
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser<'a> {
    src: &'a str,
    tokens: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].0
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.pos].0.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, message: String) -> Error {
        located(self.src, self.offset(), message)
    }

    fn expect(&mut self, want: Tok) -> Result<()> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(self.error_here(format!(
                "expected {}, found {}",
                want.describe(),
                self.peek().describe()
            )))
        }
    }

    fn sum(&mut self) -> Result<Expression> {
        let mut lhs = self.product()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Expression::Add(Box::new(lhs), Box::new(self.product()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Expression::Sub(Box::new(lhs), Box::new(self.product()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn product(&mut self) -> Result<Expression> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = Expression::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Expression::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expression> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(Expression::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expression> {
        let mut base = self.atom()?;
        while *self.peek() == Tok::Caret {
            self.bump();
            let at = self.offset();
            let negative = *self.peek() == Tok::Minus;
            if negative {
                self.bump();
            }
            let e = self.atom()?;
            if !e.is_constant() {
                return Err(located(self.src, at, "exponent must be a constant".into()));
            }
            let mut v = e
                .eval(0.0, 0.0)
                .map_err(|_| located(self.src, at, "exponent does not evaluate".into()))?;
            if negative {
                v = -v;
            }
            if v < 0.0 || v.fract() != 0.0 || v > i32::MAX as f64 {
                return Err(located(
                    self.src,
                    at,
                    format!("exponent must be a non-negative integer, got {v}"),
                ));
            }
            base = Expression::Pow(Box::new(base), v as u32);
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expression> {
        let at = self.offset();
        match self.bump() {
            Tok::Num(v) => Ok(Expression::Num(v)),
            Tok::LParen => {
                let e = self.sum()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "x" => Ok(Expression::X),
                "y" => Ok(Expression::Y),
                "abs" | "min" | "max" => {
                    self.expect(Tok::LParen)?;
                    let mut args = vec![self.sum()?];
                    while *self.peek() == Tok::Comma {
                        self.bump();
                        args.push(self.sum()?);
                    }
                    self.expect(Tok::RParen)?;
                    match name.as_str() {
                        "abs" if args.len() == 1 => {
                            Ok(Expression::Abs(Box::new(args.pop().unwrap())))
                        }
                        "abs" => Err(located(
                            self.src,
                            at,
                            format!("abs takes 1 argument, got {}", args.len()),
                        )),
                        _ if args.len() < 2 => Err(located(
                            self.src,
                            at,
                            format!("{name} takes at least 2 arguments"),
                        )),
                        "min" => Ok(Expression::Min(args)),
                        _ => Ok(Expression::Max(args)),
                    }
                }
                _ => Err(located(
                    self.src,
                    at,
                    format!("unknown identifier '{name}'"),
                )),
            },
            Tok::End => Err(located(self.src, at, "unexpected end of input".into())),
            t => Err(located(
                self.src,
                at,
                format!("unexpected {}", t.describe()),
            )),
        }
    }
}
