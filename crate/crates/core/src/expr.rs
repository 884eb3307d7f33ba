//! Fundamental-equation expressions: lexer, Pratt parser, printer and
//! evaluation over jets.
//!
//! Grammar, by decreasing precedence:
//!
//! ```text
//! primary := number | ident | ident '(' expr ')' | '(' expr ')'
//! power   := primary '^' power            (right-associative)
//! unary   := '-' unary | power
//! product := unary (('*' | '/') unary)*
//! sum     := product (('+' | '-') product)*
//! ```
//!
//! Known functions are `ln` (alias `log`), `exp` and `sqrt`. Identifiers are
//! `[A-Za-z][A-Za-z0-9_]*`; numbers are decimal with an optional exponent.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::jet::{Jet, JetError};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("syntax error at offset {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("unknown identifier(s): {}", .0.join(", "))]
    UnknownIdentifiers(Vec<String>),
    #[error("expected {expected} coordinates, got {got}")]
    PointDimension { expected: usize, got: usize },
    #[error(transparent)]
    Jet(#[from] JetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }

    /// (left, right) binding powers.
    fn binding(self) -> (u8, u8) {
        match self {
            BinOp::Add | BinOp::Sub => (1, 2),
            BinOp::Mul | BinOp::Div => (3, 4),
            BinOp::Pow => (8, 7),
        }
    }
}

const NEG_BINDING: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Ln,
    Exp,
    Sqrt,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        match name {
            "ln" | "log" => Some(Func::Ln),
            "exp" => Some(Func::Exp),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Ln => "ln",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
        }
    }
}

/// Expression tree. Identifiers stay unresolved until [`validate`] or
/// evaluation classifies them against a [`Scope`].
#[derive(Debug, Clone, PartialEq)]
pub enum Ast {
    Number(f64),
    Ident(String),
    Neg(Box<Ast>),
    Binary(BinOp, Box<Ast>, Box<Ast>),
    Call(Func, Box<Ast>),
}

impl Ast {
    pub fn identifiers(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_idents(&mut out);
        out
    }

    fn collect_idents<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Ast::Number(_) => {}
            Ast::Ident(name) => {
                if !out.contains(&name.as_str()) {
                    out.push(name)
                }
            }
            Ast::Neg(a) | Ast::Call(_, a) => a.collect_idents(out),
            Ast::Binary(_, a, b) => {
                a.collect_idents(out);
                b.collect_idents(out);
            }
        }
    }

    fn mentions_variable(&self, scope: &Scope<'_>) -> bool {
        self.identifiers()
            .iter()
            .any(|name| scope.variable_index(name).is_some())
    }
}

/// Fully parenthesized rendering; re-parses to the identical tree.
impl fmt::Display for Ast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ast::Number(x) => write!(f, "{x}"),
            Ast::Ident(name) => write!(f, "{name}"),
            Ast::Neg(a) => write!(f, "(-{a})"),
            Ast::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Ast::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Number(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Eof,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(Tok, usize)>, ParseError> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        loop {
            let (tok, at) = lx.next()?;
            let done = tok == Tok::Eof;
            out.push((tok, at));
            if done {
                return Ok(out);
            }
        }
    }

    fn peek_byte(&self) -> Option<u8> {
        self.src.as_bytes().get(self.pos).copied()
    }

    fn next(&mut self) -> Result<(Tok, usize), ParseError> {
        while matches!(self.peek_byte(), Some(b) if b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(b) = self.peek_byte() else {
            return Ok((Tok::Eof, start));
        };
        let tok = match b {
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                self.pos += 1;
                Tok::Op(b as char)
            }
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b'0'..=b'9' | b'.' => self.number(start)?,
            b if b.is_ascii_alphabetic() => {
                while matches!(self.peek_byte(), Some(c) if c.is_ascii_alphanumeric() || c == b'_')
                {
                    self.pos += 1;
                }
                Tok::Ident(self.src[start..self.pos].to_string())
            }
            _ => {
                let ch = self.src[start..].chars().next().unwrap_or('?');
                return Err(ParseError {
                    offset: start,
                    message: format!("unexpected character '{ch}'"),
                });
            }
        };
        Ok((tok, start))
    }

    fn number(&mut self, start: usize) -> Result<Tok, ParseError> {
        let digits = |lx: &mut Self| {
            let from = lx.pos;
            while matches!(lx.peek_byte(), Some(c) if c.is_ascii_digit()) {
                lx.pos += 1;
            }
            lx.pos - from
        };
        let mut mantissa = digits(self);
        if self.peek_byte() == Some(b'.') {
            self.pos += 1;
            mantissa += digits(self);
        }
        if mantissa == 0 {
            return Err(ParseError {
                offset: start,
                message: "malformed number".into(),
            });
        }
        if matches!(self.peek_byte(), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek_byte(), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = save;
                return Err(ParseError {
                    offset: save,
                    message: "malformed exponent".into(),
                });
            }
        }
        let text = &self.src[start..self.pos];
        match text.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(Tok::Number(x)),
            _ => Err(ParseError {
                offset: start,
                message: format!("number '{text}' out of range"),
            }),
        }
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &(Tok, usize) {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        match self.bump() {
            (Tok::RParen, _) => Ok(()),
            (_, at) => Err(ParseError {
                offset: at,
                message: "expected ')'".into(),
            }),
        }
    }

    fn expr(&mut self, min_bp: u8) -> Result<Ast, ParseError> {
        let mut lhs = self.prefix()?;
        loop {
            let op = match self.peek().0 {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                Tok::Op('^') => BinOp::Pow,
                _ => break,
            };
            let (l_bp, r_bp) = op.binding();
            if l_bp < min_bp {
                break;
            }
            self.bump();
            let rhs = self.expr(r_bp)?;
            lhs = Ast::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Ast, ParseError> {
        let (tok, at) = self.bump();
        match tok {
            Tok::Number(x) => Ok(Ast::Number(x)),
            Tok::Op('-') => Ok(Ast::Neg(Box::new(self.expr(NEG_BINDING)?))),
            Tok::LParen => {
                let inner = self.expr(0)?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if self.peek().0 != Tok::LParen {
                    return Ok(Ast::Ident(name));
                }
                let func = Func::lookup(&name).ok_or_else(|| ParseError {
                    offset: at,
                    message: format!("unknown function '{name}'"),
                })?;
                self.bump();
                let arg = self.expr(0)?;
                self.expect_rparen()?;
                Ok(Ast::Call(func, Box::new(arg)))
            }
            Tok::Eof => Err(ParseError {
                offset: at,
                message: "unexpected end of input".into(),
            }),
            Tok::RParen => Err(ParseError {
                offset: at,
                message: "unexpected ')'".into(),
            }),
            Tok::Op(c) => Err(ParseError {
                offset: at,
                message: format!("unexpected operator '{c}'"),
            }),
        }
    }
}

pub fn parse(text: &str) -> Result<Ast, ParseError> {
    let toks = Lexer::tokens(text)?;
    let mut p = Parser { toks, pos: 0 };
    let ast = p.expr(0)?;
    match p.peek() {
        (Tok::Eof, _) => Ok(ast),
        (Tok::RParen, at) => Err(ParseError {
            offset: *at,
            message: "unbalanced ')'".into(),
        }),
        (_, at) => Err(ParseError {
            offset: *at,
            message: "unexpected token".into(),
        }),
    }
}

/// Name resolution context: ordered coordinates and bound parameters.
#[derive(Debug, Clone, Copy)]
pub struct Scope<'a> {
    pub variables: &'a [String],
    pub parameters: &'a BTreeMap<String, f64>,
}

impl<'a> Scope<'a> {
    pub fn new(variables: &'a [String], parameters: &'a BTreeMap<String, f64>) -> Self {
        Scope {
            variables,
            parameters,
        }
    }

    fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }
}

/// Check that every identifier names a variable or a parameter.
pub fn validate(ast: &Ast, variables: &[String], parameters: &[String]) -> Result<(), ExprError> {
    let unknown: Vec<String> = ast
        .identifiers()
        .into_iter()
        .filter(|name| {
            !variables.iter().any(|v| v == name) && !parameters.iter().any(|p| p == name)
        })
        .map(str::to_string)
        .collect();
    if unknown.is_empty() {
        Ok(())
    } else {
        Err(ExprError::UnknownIdentifiers(unknown))
    }
}

/// Jet of the expression at `point`, through total order `order`.
pub fn eval_jet<T: Real>(
    ast: &Ast,
    point: &[T],
    scope: &Scope<'_>,
    order: usize,
) -> Result<Jet<T>, ExprError> {
    if point.len() != scope.variables.len() {
        return Err(ExprError::PointDimension {
            expected: scope.variables.len(),
            got: point.len(),
        });
    }
    let inputs = point
        .iter()
        .enumerate()
        .map(|(i, &x)| Jet::variable(x, i, point.len(), order))
        .collect::<Result<Vec<_>, _>>()?;
    eval_with_inputs(ast, &inputs, scope)
}

/// Evaluate with caller-supplied jets for the variables, e.g. coordinates
/// expressed as affine functions of slice parameters.
pub fn eval_with_inputs<T: Real>(
    ast: &Ast,
    inputs: &[Jet<T>],
    scope: &Scope<'_>,
) -> Result<Jet<T>, ExprError> {
    let first = inputs.first().ok_or(ExprError::PointDimension {
        expected: scope.variables.len(),
        got: 0,
    })?;
    if inputs.len() != scope.variables.len() {
        return Err(ExprError::PointDimension {
            expected: scope.variables.len(),
            got: inputs.len(),
        });
    }
    let (dim, order) = (first.dim(), first.order());
    let constant = |x: T| Jet::constant(x, dim, order).map_err(ExprError::from);
    Ok(match ast {
        Ast::Number(x) => constant(T::lit(*x))?,
        Ast::Ident(name) => match scope.variable_index(name) {
            Some(i) => inputs[i].clone(),
            None => match scope.parameters.get(name) {
                Some(&v) => constant(T::lit(v))?,
                None => return Err(ExprError::UnknownIdentifiers(vec![name.clone()])),
            },
        },
        Ast::Neg(a) => eval_with_inputs(a, inputs, scope)?.neg(),
        Ast::Call(func, a) => {
            let a = eval_with_inputs(a, inputs, scope)?;
            match func {
                Func::Ln => a.ln()?,
                Func::Exp => a.exp(),
                Func::Sqrt => a.sqrt()?,
            }
        }
        Ast::Binary(BinOp::Pow, a, b) if !b.mentions_variable(scope) => {
            let exponent = eval_scalar::<T>(b, &[], scope)?;
            eval_with_inputs(a, inputs, scope)?.pow_const(exponent)?
        }
        Ast::Binary(op, a, b) => {
            let a = eval_with_inputs(a, inputs, scope)?;
            let b = eval_with_inputs(b, inputs, scope)?;
            match op {
                BinOp::Add => a.add(&b)?,
                BinOp::Sub => a.sub(&b)?,
                BinOp::Mul => a.mul(&b)?,
                BinOp::Div => a.div(&b)?,
                BinOp::Pow => a.pow(&b)?,
            }
        }
    })
}

/// Plain floating-point evaluation, no derivatives.
pub fn eval_scalar<T: Real>(ast: &Ast, point: &[T], scope: &Scope<'_>) -> Result<T, ExprError> {
    let domain = |func: &'static str, value: T| {
        ExprError::Jet(JetError::Domain {
            func,
            value: value.to_f64_lossy(),
        })
    };
    Ok(match ast {
        Ast::Number(x) => T::lit(*x),
        Ast::Ident(name) => match scope.variable_index(name) {
            Some(i) => *point.get(i).ok_or(ExprError::PointDimension {
                expected: scope.variables.len(),
                got: point.len(),
            })?,
            None => match scope.parameters.get(name) {
                Some(&v) => T::lit(v),
                None => return Err(ExprError::UnknownIdentifiers(vec![name.clone()])),
            },
        },
        Ast::Neg(a) => -eval_scalar(a, point, scope)?,
        Ast::Call(func, a) => {
            let a = eval_scalar(a, point, scope)?;
            match func {
                Func::Ln if a > T::zero() => a.ln(),
                Func::Ln => return Err(domain("ln", a)),
                Func::Exp => a.exp(),
                Func::Sqrt if a > T::zero() => a.sqrt(),
                Func::Sqrt => return Err(domain("sqrt", a)),
            }
        }
        Ast::Binary(op, a, b) => {
            let a = eval_scalar(a, point, scope)?;
            let b = eval_scalar(b, point, scope)?;
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div if b.is_zero() => return Err(ExprError::Jet(JetError::DivisionByZero)),
                BinOp::Div => a / b,
                BinOp::Pow => {
                    if b.fract().is_zero() {
                        if a.is_zero() && b < T::zero() {
                            return Err(ExprError::Jet(JetError::DivisionByZero));
                        }
                        a.powf(b)
                    } else if a > T::zero() {
                        a.powf(b)
                    } else {
                        return Err(domain("pow", a));
                    }
                }
            }
        }
    })
}
