//! Scalar expressions in named variables.
//!
//! Grammar (whitespace between tokens is ignored):
//!
//! ```text
//! expr     = term { ("+" | "-") term } ;
//! term     = unary { ("*" | "/") unary } ;
//! unary    = "-" unary | power ;
//! power    = primary [ "^" exponent ] ;
//! exponent = [ "-" ] power ;            (* must be free of variables *)
//! primary  = number | ident | func "(" expr ")" | "(" expr ")" ;
//! func     = "sin" | "cos" | "exp" | "log" | "sqrt" | "abs" ;
//! number   = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ] ;
//! ident    = letter { letter | digit | "_" } ;
//! ```
//!
//! `^` binds tighter than unary minus, so `-x^2` is `-(x^2)`, and is right
//! associative. Exponents are folded to a constant at parse time; integral
//! exponents are evaluated by repeated multiplication.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    fn apply(self, v: f64) -> Result<f64> {
        match self {
            Func::Sin => Ok(v.sin()),
            Func::Cos => Ok(v.cos()),
            Func::Exp => Ok(v.exp()),
            Func::Log if v <= 0.0 => Err(Error::Domain(format!("log of non-positive value {v}"))),
            Func::Log => Ok(v.ln()),
            Func::Sqrt if v < 0.0 => Err(Error::Domain(format!("sqrt of negative value {v}"))),
            Func::Sqrt => Ok(v.sqrt()),
            Func::Abs => Ok(v.abs()),
        }
    }
}

/// Expression tree, generic over how variables are referenced: by name in a
/// parsed [`Expression`], by slot index once compiled.
#[derive(Debug, Clone, PartialEq)]
pub enum Node<V> {
    Const(f64),
    Var(V),
    Neg(Box<Node<V>>),
    Binary(BinOp, Box<Node<V>>, Box<Node<V>>),
    Pow(Box<Node<V>>, f64),
    Call(Func, Box<Node<V>>),
}

impl<V> Node<V> {
    fn eval_with<F>(&self, lookup: &F) -> Result<f64>
    where
        F: Fn(&V) -> Result<f64>,
    {
        match self {
            Node::Const(c) => Ok(*c),
            Node::Var(v) => lookup(v),
            Node::Neg(inner) => Ok(-inner.eval_with(lookup)?),
            Node::Binary(op, lhs, rhs) => {
                let l = lhs.eval_with(lookup)?;
                let r = rhs.eval_with(lookup)?;
                match op {
                    BinOp::Add => Ok(l + r),
                    BinOp::Sub => Ok(l - r),
                    BinOp::Mul => Ok(l * r),
                    BinOp::Div if r == 0.0 => Err(Error::Domain("division by zero".into())),
                    BinOp::Div => Ok(l / r),
                }
            }
            Node::Pow(base, exponent) => power(base.eval_with(lookup)?, *exponent),
            Node::Call(func, arg) => func.apply(arg.eval_with(lookup)?),
        }
    }

    fn map_vars<W, F>(&self, f: &F) -> Result<Node<W>>
    where
        F: Fn(&V) -> Result<W>,
    {
        Ok(match self {
            Node::Const(c) => Node::Const(*c),
            Node::Var(v) => Node::Var(f(v)?),
            Node::Neg(inner) => Node::Neg(Box::new(inner.map_vars(f)?)),
            Node::Binary(op, l, r) => {
                Node::Binary(*op, Box::new(l.map_vars(f)?), Box::new(r.map_vars(f)?))
            }
            Node::Pow(base, e) => Node::Pow(Box::new(base.map_vars(f)?), *e),
            Node::Call(func, arg) => Node::Call(*func, Box::new(arg.map_vars(f)?)),
        })
    }
}

fn power(base: f64, exponent: f64) -> Result<f64> {
    if exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64 {
        let k = exponent.abs() as u64;
        if exponent < 0.0 && base == 0.0 {
            return Err(Error::Domain("zero raised to a negative power".into()));
        }
        let mut acc = 1.0;
        let mut sq = base;
        let mut rem = k;
        while rem > 0 {
            if rem & 1 == 1 {
                acc *= sq;
            }
            sq *= sq;
            rem >>= 1;
        }
        return Ok(if exponent < 0.0 { 1.0 / acc } else { acc });
    }
    if base < 0.0 {
        return Err(Error::Domain(format!(
            "negative base {base} raised to non-integer power {exponent}"
        )));
    }
    if base == 0.0 && exponent < 0.0 {
        return Err(Error::Domain("zero raised to a negative power".into()));
    }
    Ok(base.powf(exponent))
}

impl fmt::Display for Node<String> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Const(c) => write!(f, "{c:?}"),
            Node::Var(name) => f.write_str(name),
            Node::Neg(inner) => write!(f, "(-{inner})"),
            Node::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Node::Pow(base, e) => write!(f, "({base} ^ {e:?})"),
            Node::Call(func, arg) => write!(f, "{}({arg})", func.name()),
        }
    }
}

/// A parsed expression together with its sorted free variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    ast: Node<String>,
    free_vars: Vec<String>,
}

impl Expression {
    pub fn parse(source: &str) -> Result<Self> {
        parse(source)
    }

    pub fn ast(&self) -> &Node<String> {
        &self.ast
    }

    /// Free variable names in lexicographic order.
    pub fn free_vars(&self) -> &[String] {
        &self.free_vars
    }

    pub fn eval(&self, binding: &HashMap<String, f64>) -> Result<f64> {
        let v = self.ast.eval_with(&|name: &String| {
            binding
                .get(name)
                .copied()
                .ok_or_else(|| Error::UnboundVariable(name.clone()))
        })?;
        check_nan(v)
    }

    /// Resolves variables to positions in `order`, for fast repeated evaluation
    /// on a slice of values. Names in `order` that the expression does not use
    /// are allowed.
    pub fn compile(&self, order: &[&str]) -> Result<CompiledExpr> {
        let ast = self.ast.map_vars(&|name: &String| {
            order
                .iter()
                .position(|o| o == name)
                .ok_or_else(|| Error::UnboundVariable(name.clone()))
        })?;
        Ok(CompiledExpr {
            ast,
            arity: order.len(),
        })
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.ast.fmt(f)
    }
}

impl std::str::FromStr for Expression {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse(s)
    }
}

fn check_nan(v: f64) -> Result<f64> {
    if v.is_nan() {
        Err(Error::Domain("expression evaluated to NaN".into()))
    } else {
        Ok(v)
    }
}

/// Expression with variables resolved to slot indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledExpr {
    ast: Node<usize>,
    arity: usize,
}

impl CompiledExpr {
    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn eval(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.arity {
            return Err(Error::DimensionMismatch {
                expected: self.arity,
                got: values.len(),
            });
        }
        let v = self.ast.eval_with(&|&slot: &usize| Ok(values[slot]))?;
        check_nan(v)
    }
}

pub fn parse(source: &str) -> Result<Expression> {
    let tokens = lex(source)?;
    if tokens.len() == 1 {
        return Err(Error::EmptyInput);
    }
    let mut parser = Parser { tokens, pos: 0 };
    let ast = parser.expr()?;
    let tok = parser.peek();
    if tok.kind != TokenKind::Eof {
        return Err(Error::Syntax {
            offset: tok.offset,
            message: format!("unexpected {}", tok.kind.describe()),
        });
    }
    let mut vars = BTreeSet::new();
    collect_vars(&ast, &mut vars);
    Ok(Expression {
        ast,
        free_vars: vars.into_iter().collect(),
    })
}

fn collect_vars(node: &Node<String>, out: &mut BTreeSet<String>) {
    match node {
        Node::Const(_) => {}
        Node::Var(name) => {
            out.insert(name.clone());
        }
        Node::Neg(inner) | Node::Pow(inner, _) | Node::Call(_, inner) => collect_vars(inner, out),
        Node::Binary(_, l, r) => {
            collect_vars(l, out);
            collect_vars(r, out);
        }
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
    Eof,
}

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Num(v) => format!("number {v}"),
            TokenKind::Ident(s) => format!("identifier `{s}`"),
            TokenKind::Plus => "`+`".into(),
            TokenKind::Minus => "`-`".into(),
            TokenKind::Star => "`*`".into(),
            TokenKind::Slash => "`/`".into(),
            TokenKind::Caret => "`^`".into(),
            TokenKind::LParen => "`(`".into(),
            TokenKind::RParen => "`)`".into(),
            TokenKind::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    offset: usize,
}

fn lex(source: &str) -> Result<Vec<Token>> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let kind = match c {
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
                let text = &source[start..i];
                let value = text.parse::<f64>().map_err(|_| Error::Syntax {
                    offset: start,
                    message: format!("malformed number `{text}`"),
                })?;
                tokens.push(Token {
                    kind: TokenKind::Num(value),
                    offset: start,
                });
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                tokens.push(Token {
                    kind: TokenKind::Ident(source[start..i].to_string()),
                    offset: start,
                });
                continue;
            }
            _ => {
                let ch = source[start..].chars().next().unwrap_or('?');
                return Err(Error::Syntax {
                    offset: start,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        };
        tokens.push(Token {
            kind,
            offset: start,
        });
        i += 1;
    }
    tokens.push(Token {
        kind: TokenKind::Eof,
        offset: source.len(),
    });
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let tok = self.tokens[self.pos].clone();
        if tok.kind != TokenKind::Eof {
            self.pos += 1;
        }
        tok
    }

    fn expect(&mut self, kind: TokenKind) -> Result<()> {
        let tok = self.bump();
        if tok.kind == kind {
            Ok(())
        } else {
            Err(Error::Syntax {
                offset: tok.offset,
                message: format!(
                    "expected {}, found {}",
                    kind.describe(),
                    tok.kind.describe()
                ),
            })
        }
    }

    fn expr(&mut self) -> Result<Node<String>> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().kind {
                TokenKind::Plus => BinOp::Add,
                TokenKind::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node<String>> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().kind {
                TokenKind::Star => BinOp::Mul,
                TokenKind::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node<String>> {
        if self.peek().kind == TokenKind::Minus {
            self.bump();
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node<String>> {
        let base = self.primary()?;
        if self.peek().kind != TokenKind::Caret {
            return Ok(base);
        }
        self.bump();
        let offset = self.peek().offset;
        let negate = if self.peek().kind == TokenKind::Minus {
            self.bump();
            true
        } else {
            false
        };
        let exponent = self.power()?;
        let value = exponent
            .eval_with(&|_: &String| {
                Err(Error::Syntax {
                    offset,
                    message: "exponent must be a numeric constant".into(),
                })
            })
            .map_err(|e| match e {
                Error::Syntax { .. } => e,
                other => Error::Syntax {
                    offset,
                    message: format!("invalid exponent: {other}"),
                },
            })?;
        let value = if negate { -value } else { value };
        Ok(Node::Pow(Box::new(base), value))
    }

    fn primary(&mut self) -> Result<Node<String>> {
        let tok = self.bump();
        match tok.kind {
            TokenKind::Num(v) => Ok(Node::Const(v)),
            TokenKind::Ident(name) => {
                if self.peek().kind == TokenKind::LParen {
                    let func = Func::from_name(&name).ok_or(Error::UnknownFunction {
                        name,
                        offset: tok.offset,
                    })?;
                    self.bump();
                    let arg = self.expr()?;
                    self.expect(TokenKind::RParen)?;
                    Ok(Node::Call(func, Box::new(arg)))
                } else {
                    Ok(Node::Var(name))
                }
            }
            TokenKind::LParen => {
                let inner = self.expr()?;
                self.expect(TokenKind::RParen)?;
                Ok(inner)
            }
            other => Err(Error::Syntax {
                offset: tok.offset,
                message: format!("expected an operand, found {}", other.describe()),
            }),
        }
    }
}

/// Central difference `f(p + h e_var) - f(p - h e_var)` and the value `f(p)`.
fn central_difference_raw(
    expr: &Expression,
    var: &str,
    point: &HashMap<String, f64>,
    h: f64,
) -> Result<(f64, f64)> {
    if !(h > 0.0) {
        return Err(Error::Config(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let mut p = point.clone();
    let base = *p.entry(var.to_string()).or_insert(0.0);
    let centre = expr.eval(&p)?;
    p.insert(var.to_string(), base + h);
    let up = expr.eval(&p)?;
    p.insert(var.to_string(), base - h);
    let down = expr.eval(&p)?;
    Ok((up - down, centre))
}

/// Finite-difference estimate of the partial derivative in `var`.
pub fn partial_derivative(
    expr: &Expression,
    var: &str,
    point: &HashMap<String, f64>,
    h: f64,
) -> Result<f64> {
    let (diff, _) = central_difference_raw(expr, var, point, h)?;
    Ok(diff / (2.0 * h))
}

/// Relative threshold below which a finite-difference partial counts as zero.
pub const TOL_DERIV: f64 = 1e-8;

/// Sign of the partial derivative in `var` at `point`: -1, 0 or +1.
pub fn partial_sign(
    expr: &Expression,
    var: &str,
    point: &HashMap<String, f64>,
    h: f64,
) -> Result<i8> {
    let (diff, centre) = central_difference_raw(expr, var, point, h)?;
    if diff.abs() <= TOL_DERIV * h * (1.0 + centre.abs()) {
        Ok(0)
    } else if diff > 0.0 {
        Ok(1)
    } else {
        Ok(-1)
    }
}
