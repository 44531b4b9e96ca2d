//! Analytic scalar expressions over chart coordinates.
//!
//! Every metric, frame, tensor and direction component in the toolkit is a
//! [`FieldExpr`]. The grammar is ordinary infix arithmetic:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | coordinate | 'pi' | 'e' | func '(' expr ')' | '(' expr ')'
//! func    := sin | cos | tan | exp | ln | sqrt | abs
//! ```
//!
//! so `^` binds tighter than unary minus (`-x^2` is `-(x^2)`) and associates
//! to the right (`2^3^2` is `2^9`).

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Deref, DerefMut};

use crate::diff;
use crate::error::{DomainKind, Error, Result};

/// A point of a chart: one real value per coordinate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Copy of `self` with coordinate `index` moved by `delta`.
    pub fn offset(&self, index: usize, delta: f64) -> Point {
        let mut p = self.clone();
        p.0[index] += delta;
        p
    }
}

impl Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Point {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

impl From<&[f64]> for Point {
    fn from(v: &[f64]) -> Self {
        Point(v.to_vec())
    }
}

impl<const N: usize> From<[f64; N]> for Point {
    fn from(v: [f64; N]) -> Self {
        Point(v.to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    fn apply(self, x: f64) -> Result<f64> {
        match self {
            Func::Sin => Ok(libm::sin(x)),
            Func::Cos => Ok(libm::cos(x)),
            Func::Tan => Ok(libm::tan(x)),
            Func::Exp => Ok(libm::exp(x)),
            Func::Ln if x <= 0.0 => Err(Error::Domain(DomainKind::LogNonPositive)),
            Func::Ln => Ok(libm::log(x)),
            Func::Sqrt if x < 0.0 => Err(Error::Domain(DomainKind::SqrtNegative)),
            Func::Sqrt => Ok(libm::sqrt(x)),
            Func::Abs => Ok(libm::fabs(x)),
        }
    }
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
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

/// Expression tree. Coordinates are referenced by index.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl Node {
    fn eval(&self, p: &[f64]) -> Result<f64> {
        let v = match self {
            Node::Const(c) => *c,
            Node::Var(i) => p[*i],
            Node::Neg(a) => -a.eval(p)?,
            Node::Binary(op, a, b) => {
                let a = a.eval(p)?;
                let b = b.eval(p)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div if b == 0.0 => return Err(Error::Domain(DomainKind::DivisionByZero)),
                    BinOp::Div => a / b,
                    BinOp::Pow => libm::pow(a, b),
                }
            }
            Node::Call(f, a) => f.apply(a.eval(p)?)?,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain(DomainKind::NonFinite))
        }
    }

    fn write(&self, names: &[String], f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Const(c) if *c < 0.0 => write!(f, "({:?})", c),
            Node::Const(c) => write!(f, "{:?}", c),
            Node::Var(i) => f.write_str(&names[*i]),
            Node::Neg(a) => {
                f.write_str("(-")?;
                a.write(names, f)?;
                f.write_str(")")
            }
            Node::Binary(op, a, b) => {
                f.write_str("(")?;
                a.write(names, f)?;
                write!(f, " {} ", op.symbol())?;
                b.write(names, f)?;
                f.write_str(")")
            }
            Node::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                a.write(names, f)?;
                f.write_str(")")
            }
        }
    }
}

const RESERVED: &[&str] = &["pi", "e", "sin", "cos", "tan", "exp", "ln", "sqrt", "abs"];

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Checks that coordinate names are distinct identifiers not shadowing
/// built-in constants or functions.
pub fn validate_coordinate_names<S: AsRef<str>>(names: &[S]) -> Result<()> {
    for (i, name) in names.iter().enumerate() {
        let name = name.as_ref();
        if !is_identifier(name) || RESERVED.contains(&name) {
            return Err(Error::InvalidCoordinateName(name.to_string()));
        }
        if names[..i].iter().any(|other| other.as_ref() == name) {
            return Err(Error::InvalidCoordinateName(name.to_string()));
        }
    }
    Ok(())
}

/// A parsed, immutable scalar expression in a fixed list of coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldExpr {
    source: String,
    names: Vec<String>,
    ast: Node,
}

impl FieldExpr {
    pub fn parse<S: AsRef<str>>(source: &str, coordinate_names: &[S]) -> Result<FieldExpr> {
        validate_coordinate_names(coordinate_names)?;
        let names: Vec<String> = coordinate_names.iter().map(|s| s.as_ref().to_string()).collect();
        let tokens = lex(source)?;
        let mut parser = Parser {
            tokens: &tokens,
            pos: 0,
            names: &names,
            end: source.len(),
        };
        let ast = parser.expr()?;
        if let Some(tok) = parser.peek() {
            return Err(syntax(tok.pos, "unexpected trailing input"));
        }
        Ok(FieldExpr {
            source: source.to_string(),
            names,
            ast,
        })
    }

    /// The constant expression `value` over the given coordinates.
    pub fn constant<S: AsRef<str>>(value: f64, coordinate_names: &[S]) -> FieldExpr {
        let names: Vec<String> = coordinate_names.iter().map(|s| s.as_ref().to_string()).collect();
        FieldExpr {
            source: alloc::format!("{:?}", value),
            names,
            ast: Node::Const(value),
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn coordinate_names(&self) -> &[String] {
        &self.names
    }

    pub fn dimension(&self) -> usize {
        self.names.len()
    }

    pub fn ast(&self) -> &Node {
        &self.ast
    }

    pub fn evaluate(&self, p: &[f64]) -> Result<f64> {
        if p.len() != self.names.len() {
            return Err(Error::DimensionMismatch {
                expected: self.names.len(),
                found: p.len(),
            });
        }
        self.ast.eval(p)
    }

    pub fn is_constant(&self) -> bool {
        fn walk(n: &Node) -> bool {
            match n {
                Node::Const(_) => true,
                Node::Var(_) => false,
                Node::Neg(a) | Node::Call(_, a) => walk(a),
                Node::Binary(_, a, b) => walk(a) && walk(b),
            }
        }
        walk(&self.ast)
    }

    /// Partial derivative along coordinate `coord_index`, by a central
    /// difference with one Richardson extrapolation level.
    pub fn derivative(&self, coord_index: usize, p: &[f64], step: f64) -> Result<f64> {
        if coord_index >= self.names.len() {
            return Err(Error::DimensionMismatch {
                expected: self.names.len(),
                found: coord_index + 1,
            });
        }
        // bare coordinates and constants have exact derivatives
        match &self.ast {
            Node::Var(k) if p.len() == self.names.len() => Ok(if *k == coord_index { 1.0 } else { 0.0 }),
            Node::Const(_) if p.len() == self.names.len() => Ok(0.0),
            _ => diff::richardson(|q| self.evaluate(q), p, coord_index, step),
        }
    }

    /// [`FieldExpr::derivative`] with the default step for `p`.
    pub fn derivative_at(&self, coord_index: usize, p: &[f64]) -> Result<f64> {
        let step = diff::default_step(p.get(coord_index).copied().unwrap_or(0.0));
        self.derivative(coord_index, p, step)
    }

    pub fn gradient(&self, p: &[f64]) -> Result<Vec<f64>> {
        (0..self.names.len()).map(|i| self.derivative_at(i, p)).collect()
    }
}

/// Fully parenthesised form that re-parses to the same tree.
impl fmt::Display for FieldExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.ast.write(&self.names, f)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    pos: usize,
}

fn syntax(position: usize, message: &str) -> Error {
    Error::Syntax {
        position,
        message: message.to_string(),
    }
}

fn lex(src: &str) -> Result<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let kind = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => TokenKind::Plus,
            b'-' => TokenKind::Minus,
            b'*' => TokenKind::Star,
            b'/' => TokenKind::Slash,
            b'^' => TokenKind::Caret,
            b'(' => TokenKind::LParen,
            b')' => TokenKind::RParen,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                // exponent only when followed by digits, so `2e` stays an error
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
                let value: f64 = text.parse().map_err(|_| syntax(start, "malformed number"))?;
                if !value.is_finite() {
                    return Err(syntax(start, "number out of range"));
                }
                out.push(Token {
                    kind: TokenKind::Num(value),
                    pos: start,
                });
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Token {
                    kind: TokenKind::Ident(src[start..i].to_string()),
                    pos: start,
                });
                continue;
            }
            _ => return Err(syntax(start, "unexpected character")),
        };
        out.push(Token { kind, pos: start });
        i += 1;
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    names: &'a [String],
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<&'a Token> {
        let t = self.tokens.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek().map(|t| &t.kind) == Some(kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat(&TokenKind::Plus) {
                BinOp::Add
            } else if self.eat(&TokenKind::Minus) {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat(&TokenKind::Star) {
                BinOp::Mul
            } else if self.eat(&TokenKind::Slash) {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat(&TokenKind::Minus) {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat(&TokenKind::Caret) {
            let exponent = self.unary()?;
            return Ok(Node::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let tok = match self.next() {
            Some(t) => t,
            None => return Err(syntax(self.end, "unexpected end of input")),
        };
        match &tok.kind {
            TokenKind::Num(v) => Ok(Node::Const(*v)),
            TokenKind::LParen => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            TokenKind::Ident(name) => {
                if let Some(i) = self.names.iter().position(|n| n == name) {
                    return Ok(Node::Var(i));
                }
                match name.as_str() {
                    "pi" => return Ok(Node::Const(core::f64::consts::PI)),
                    "e" => return Ok(Node::Const(core::f64::consts::E)),
                    _ => {}
                }
                if let Some(func) = Func::from_name(name) {
                    if !self.eat(&TokenKind::LParen) {
                        let at = self.peek().map_or(self.end, |t| t.pos);
                        return Err(syntax(at, "expected `(` after function name"));
                    }
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    return Ok(Node::Call(func, Box::new(arg)));
                }
                Err(Error::UnknownIdentifier(name.clone()))
            }
            _ => Err(syntax(tok.pos, "expected a number, identifier or `(`")),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        match self.next() {
            Some(Token {
                kind: TokenKind::RParen,
                ..
            }) => Ok(()),
            Some(t) => Err(syntax(t.pos, "expected `)`")),
            None => Err(syntax(self.end, "expected `)` before end of input")),
        }
    }
}
