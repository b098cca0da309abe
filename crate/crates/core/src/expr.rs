//! Scalar expression language.
//!
//! Expressions are written over chart coordinates `x1..xn`, named free
//! parameters (bound at evaluation time), the constant `pi`, and the derived
//! radius symbol `R`, which expands at parse time to `sqrt(x1^2+...+xn^2)`.
//! Even powers `R^(2m)` (and `sqrt(u)^(2m)` in general) are stored as `u^m`.
//!
//! Grammar, from loosest to tightest binding:
//!
//! ```text
//! sum      := product (('+' | '-') product)*
//! product  := unary (('*' | '/') unary)*
//! unary    := ('-' | '+') unary | power
//! power    := primary ('^' exponent)*          left associative
//! exponent := ('-' | '+')* primary              must fold to a constant
//! primary  := number | ident | func '(' sum ')' | '(' sum ')'
//! ```
//!
//! Derivatives are exact and symbolic; only light constant folding is applied
//! (`0*e -> 0`, `e+0 -> e`, `1*e -> e`, numeric subexpressions).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("variable x{index} out of range for chart dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("unbound parameter `{0}`")]
    UnboundParameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("point has {got} coordinates, expected {expected}")]
    PointDimension { got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Atan,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "atan" => Func::Atan,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Atan => "atan",
        }
    }

    fn apply(self, v: f64) -> Result<f64, ExprError> {
        let out = match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Atan => v.atan(),
            Func::Log => {
                if v <= 0.0 {
                    return Err(ExprError::Domain(format!("log of non-positive value {v}")));
                }
                v.ln()
            }
            Func::Sqrt => {
                if v < 0.0 {
                    return Err(ExprError::Domain(format!("sqrt of negative value {v}")));
                }
                v.sqrt()
            }
        };
        if out.is_finite() {
            Ok(out)
        } else {
            Err(ExprError::Domain(format!("{}({v}) is not finite", self.name())))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Param(Arc<str>),
    Neg(Arc<Node>),
    Add(Arc<Node>, Arc<Node>),
    Sub(Arc<Node>, Arc<Node>),
    Mul(Arc<Node>, Arc<Node>),
    Div(Arc<Node>, Arc<Node>),
    Pow(Arc<Node>, f64),
    Call(Func, Arc<Node>),
}

/// Named parameter values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Params(pub BTreeMap<String, f64>);

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.0.insert(name.to_string(), value);
        self
    }

    pub fn insert(&mut self, name: &str, value: f64) {
        self.0.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }
}

/// Anything that can resolve a parameter name to a value.
pub trait Scope: Sync {
    fn lookup(&self, name: &str) -> Option<f64>;
}

impl Scope for Params {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.get(name)
    }
}

impl Scope for [(&str, f64)] {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

/// A few extra bindings layered over a base scope (time, homotopy parameter, ...).
pub struct Layered<'a> {
    pub extra: &'a [(&'a str, f64)],
    pub base: &'a dyn Scope,
}

impl Scope for Layered<'_> {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.extra.lookup(name).or_else(|| self.base.lookup(name))
    }
}

/// Immutable expression tree over an `n`-dimensional chart.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    dim: usize,
    root: Arc<Node>,
}

/// Parse `text` as an expression over a chart of dimension `dim`.
pub fn parse(text: &str, dim: usize) -> Result<Expression, ExprError> {
    Expression::parse(text, dim)
}

/// Partial derivative with respect to coordinate `k` (0-based).
pub fn differentiate(e: &Expression, k: usize) -> Result<Expression, ExprError> {
    e.diff(k)
}

/// Evaluate at `point` with parameter bindings.
pub fn evaluate(e: &Expression, point: &[f64], params: &dyn Scope) -> Result<f64, ExprError> {
    e.eval(point, params)
}

impl Expression {
    pub fn parse(text: &str, dim: usize) -> Result<Self, ExprError> {
        if text.trim().is_empty() {
            return Err(ExprError::Syntax {
                offset: 0,
                message: "empty expression".into(),
            });
        }
        let tokens = lex(text)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            dim,
        };
        let root = p.sum()?;
        match p.peek() {
            Tok::End => Ok(Expression { dim, root }),
            _ => Err(p.error("unexpected trailing input")),
        }
    }

    pub fn constant(value: f64, dim: usize) -> Self {
        Self::from_node(dim, Node::Num(value))
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(0.0, dim)
    }

    /// Coordinate `x_{k+1}` (0-based `k`).
    pub fn var(k: usize, dim: usize) -> Self {
        assert!(k < dim, "coordinate index {k} out of range for dimension {dim}");
        Self::from_node(dim, Node::Var(k))
    }

    pub fn param(name: &str, dim: usize) -> Self {
        Self::from_node(dim, Node::Param(Arc::from(name)))
    }

    /// `sqrt(x1^2 + ... + xn^2)`.
    pub fn radius(dim: usize) -> Self {
        Self {
            dim,
            root: radius_node(dim),
        }
    }

    fn from_node(dim: usize, node: Node) -> Self {
        Self {
            dim,
            root: Arc::new(node),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Same tree, reinterpreted over a chart of dimension `dim`.
    pub fn with_dim(&self, dim: usize) -> Result<Self, ExprError> {
        if let Some(k) = self.max_var() {
            if k >= dim {
                return Err(ExprError::IndexOutOfRange { index: k + 1, dim });
            }
        }
        Ok(Self {
            dim,
            root: self.root.clone(),
        })
    }

    fn max_var(&self) -> Option<usize> {
        fn walk(n: &Node, best: &mut Option<usize>) {
            match n {
                Node::Var(k) => *best = Some(best.map_or(*k, |b| b.max(*k))),
                Node::Num(_) | Node::Param(_) => {}
                Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => walk(a, best),
                Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                    walk(a, best);
                    walk(b, best)
                }
            }
        }
        let mut best = None;
        walk(&self.root, &mut best);
        best
    }

    pub fn is_zero(&self) -> bool {
        matches!(*self.root, Node::Num(v) if v == 0.0)
    }

    pub fn as_constant(&self) -> Option<f64> {
        match *self.root {
            Node::Num(v) => Some(v),
            _ => None,
        }
    }

    /// Names of the free parameters referenced by the expression.
    pub fn params(&self) -> BTreeSet<String> {
        fn walk(n: &Node, out: &mut BTreeSet<String>) {
            match n {
                Node::Param(p) => {
                    out.insert(p.to_string());
                }
                Node::Num(_) | Node::Var(_) => {}
                Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => walk(a, out),
                Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                    walk(a, out);
                    walk(b, out)
                }
            }
        }
        let mut out = BTreeSet::new();
        walk(&self.root, &mut out);
        out
    }

    pub fn eval(&self, point: &[f64], scope: &dyn Scope) -> Result<f64, ExprError> {
        if point.len() < self.dim {
            return Err(ExprError::PointDimension {
                got: point.len(),
                expected: self.dim,
            });
        }
        eval_node(&self.root, point, scope)
    }

    /// Evaluate an expression that references no coordinates.
    pub fn eval_scalar(&self, scope: &dyn Scope) -> Result<f64, ExprError> {
        let zeros = vec![0.0; self.dim];
        self.eval(&zeros, scope)
    }

    /// Exact partial derivative with respect to coordinate `k` (0-based).
    pub fn diff(&self, k: usize) -> Result<Self, ExprError> {
        if k >= self.dim {
            return Err(ExprError::IndexOutOfRange {
                index: k + 1,
                dim: self.dim,
            });
        }
        Ok(Self {
            dim: self.dim,
            root: diff_node(&self.root, &Wrt::Var(k)),
        })
    }

    /// Exact partial derivative with respect to a named parameter.
    pub fn diff_param(&self, name: &str) -> Self {
        Self {
            dim: self.dim,
            root: diff_node(&self.root, &Wrt::Param(name)),
        }
    }

    /// Gradient: all coordinate partials.
    pub fn gradient(&self) -> Vec<Self> {
        (0..self.dim)
            .map(|k| Self {
                dim: self.dim,
                root: diff_node(&self.root, &Wrt::Var(k)),
            })
            .collect()
    }

    pub fn powf(&self, exponent: f64) -> Self {
        Self {
            dim: self.dim,
            root: pow(self.root.clone(), exponent),
        }
    }

    pub fn call(&self, f: Func) -> Self {
        Self {
            dim: self.dim,
            root: call(f, self.root.clone()),
        }
    }

    fn binary(&self, rhs: &Self, op: fn(Arc<Node>, Arc<Node>) -> Arc<Node>) -> Self {
        assert_eq!(self.dim, rhs.dim, "expression dimensions differ");
        Self {
            dim: self.dim,
            root: op(self.root.clone(), rhs.root.clone()),
        }
    }
}

fn radius_node(dim: usize) -> Arc<Node> {
    let mut sum: Option<Arc<Node>> = None;
    for k in 0..dim {
        let sq = Arc::new(Node::Pow(Arc::new(Node::Var(k)), 2.0));
        sum = Some(match sum {
            None => sq,
            Some(s) => Arc::new(Node::Add(s, sq)),
        });
    }
    let inner = sum.unwrap_or_else(|| Arc::new(Node::Num(0.0)));
    Arc::new(Node::Call(Func::Sqrt, inner))
}

macro_rules! impl_binop {
    ($trait:ident, $method:ident, $ctor:ident) => {
        impl $trait<&Expression> for &Expression {
            type Output = Expression;
            fn $method(self, rhs: &Expression) -> Expression {
                self.binary(rhs, $ctor)
            }
        }
        impl $trait<Expression> for Expression {
            type Output = Expression;
            fn $method(self, rhs: Expression) -> Expression {
                self.binary(&rhs, $ctor)
            }
        }
        impl $trait<&Expression> for Expression {
            type Output = Expression;
            fn $method(self, rhs: &Expression) -> Expression {
                self.binary(rhs, $ctor)
            }
        }
        impl $trait<Expression> for &Expression {
            type Output = Expression;
            fn $method(self, rhs: Expression) -> Expression {
                self.binary(&rhs, $ctor)
            }
        }
        impl $trait<f64> for &Expression {
            type Output = Expression;
            fn $method(self, rhs: f64) -> Expression {
                self.binary(&Expression::constant(rhs, self.dim), $ctor)
            }
        }
        impl $trait<f64> for Expression {
            type Output = Expression;
            fn $method(self, rhs: f64) -> Expression {
                self.binary(&Expression::constant(rhs, self.dim), $ctor)
            }
        }
    };
}

impl_binop!(Add, add, add);
impl_binop!(Sub, sub, sub);
impl_binop!(Mul, mul, mul);
impl_binop!(Div, div, div);

impl Neg for &Expression {
    type Output = Expression;
    fn neg(self) -> Expression {
        Expression {
            dim: self.dim,
            root: neg(self.root.clone()),
        }
    }
}

impl Neg for Expression {
    type Output = Expression;
    fn neg(self) -> Expression {
        -&self
    }
}

// ---------------------------------------------------------------------------
// folding constructors

fn num(v: f64) -> Arc<Node> {
    Arc::new(Node::Num(v))
}

fn as_num(n: &Node) -> Option<f64> {
    match n {
        Node::Num(v) => Some(*v),
        _ => None,
    }
}

fn add(a: Arc<Node>, b: Arc<Node>) -> Arc<Node> {
    match (as_num(&a), as_num(&b)) {
        (Some(x), Some(y)) => num(x + y),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => Arc::new(Node::Add(a, b)),
    }
}

fn sub(a: Arc<Node>, b: Arc<Node>) -> Arc<Node> {
    match (as_num(&a), as_num(&b)) {
        (Some(x), Some(y)) => num(x - y),
        (_, Some(y)) if y == 0.0 => a,
        (Some(x), _) if x == 0.0 => neg(b),
        _ => Arc::new(Node::Sub(a, b)),
    }
}

fn mul(a: Arc<Node>, b: Arc<Node>) -> Arc<Node> {
    match (as_num(&a), as_num(&b)) {
        (Some(x), Some(y)) => num(x * y),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => num(0.0),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        (Some(x), _) if x == -1.0 => neg(b),
        (_, Some(y)) if y == -1.0 => neg(a),
        _ => Arc::new(Node::Mul(a, b)),
    }
}

fn div(a: Arc<Node>, b: Arc<Node>) -> Arc<Node> {
    match (as_num(&a), as_num(&b)) {
        (Some(x), Some(y)) if y != 0.0 && (x / y).is_finite() => num(x / y),
        (Some(x), _) if x == 0.0 => num(0.0),
        (_, Some(y)) if y == 1.0 => a,
        _ => Arc::new(Node::Div(a, b)),
    }
}

fn neg(a: Arc<Node>) -> Arc<Node> {
    match &*a {
        Node::Num(v) => num(-v),
        Node::Neg(inner) => inner.clone(),
        _ => Arc::new(Node::Neg(a)),
    }
}

fn pow(base: Arc<Node>, exponent: f64) -> Arc<Node> {
    if exponent == 0.0 {
        return num(1.0);
    }
    if exponent == 1.0 {
        return base;
    }
    if let Some(b) = as_num(&base) {
        if let Ok(v) = pow_value(b, exponent) {
            return num(v);
        }
    }
    Arc::new(Node::Pow(base, exponent))
}

fn call(f: Func, arg: Arc<Node>) -> Arc<Node> {
    if let Some(v) = as_num(&arg) {
        if let Ok(r) = f.apply(v) {
            return num(r);
        }
    }
    Arc::new(Node::Call(f, arg))
}

fn pow_value(base: f64, exponent: f64) -> Result<f64, ExprError> {
    let integral = exponent.fract() == 0.0;
    if !integral && base <= 0.0 {
        return Err(ExprError::Domain(format!(
            "non-integer power {exponent} of non-positive base {base}"
        )));
    }
    if base == 0.0 && exponent < 0.0 {
        return Err(ExprError::Domain("negative power of zero".into()));
    }
    let v = if integral && exponent.abs() <= i32::MAX as f64 {
        base.powi(exponent as i32)
    } else {
        base.powf(exponent)
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ExprError::Domain(format!("{base}^{exponent} is not finite")))
    }
}

// ---------------------------------------------------------------------------
// evaluation and differentiation

fn eval_node(n: &Node, x: &[f64], scope: &dyn Scope) -> Result<f64, ExprError> {
    let v = match n {
        Node::Num(v) => *v,
        Node::Var(k) => x[*k],
        Node::Param(p) => scope
            .lookup(p)
            .ok_or_else(|| ExprError::UnboundParameter(p.to_string()))?,
        Node::Neg(a) => -eval_node(a, x, scope)?,
        Node::Add(a, b) => eval_node(a, x, scope)? + eval_node(b, x, scope)?,
        Node::Sub(a, b) => eval_node(a, x, scope)? - eval_node(b, x, scope)?,
        Node::Mul(a, b) => eval_node(a, x, scope)? * eval_node(b, x, scope)?,
        Node::Div(a, b) => {
            let num = eval_node(a, x, scope)?;
            let den = eval_node(b, x, scope)?;
            if den == 0.0 {
                return Err(ExprError::Domain("division by zero".into()));
            }
            num / den
        }
        Node::Pow(a, e) => pow_value(eval_node(a, x, scope)?, *e)?,
        Node::Call(f, a) => f.apply(eval_node(a, x, scope)?)?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ExprError::Domain("non-finite intermediate value".into()))
    }
}

enum Wrt<'a> {
    Var(usize),
    Param(&'a str),
}

fn diff_node(n: &Node, wrt: &Wrt) -> Arc<Node> {
    match n {
        Node::Num(_) => num(0.0),
        Node::Var(k) => num(matches!(wrt, Wrt::Var(j) if j == k) as u8 as f64),
        Node::Param(p) => num(matches!(wrt, Wrt::Param(q) if **q == **p) as u8 as f64),
        Node::Neg(a) => neg(diff_node(a, wrt)),
        Node::Add(a, b) => add(diff_node(a, wrt), diff_node(b, wrt)),
        Node::Sub(a, b) => sub(diff_node(a, wrt), diff_node(b, wrt)),
        Node::Mul(a, b) => add(
            mul(diff_node(a, wrt), b.clone()),
            mul(a.clone(), diff_node(b, wrt)),
        ),
        Node::Div(a, b) => {
            let da = diff_node(a, wrt);
            let db = diff_node(b, wrt);
            if as_num(&db) == Some(0.0) {
                div(da, b.clone())
            } else {
                div(
                    sub(mul(da, b.clone()), mul(a.clone(), db)),
                    pow(b.clone(), 2.0),
                )
            }
        }
        Node::Pow(a, e) => {
            let da = diff_node(a, wrt);
            mul(mul(num(*e), pow(a.clone(), e - 1.0)), da)
        }
        Node::Call(f, a) => {
            let da = diff_node(a, wrt);
            if as_num(&da) == Some(0.0) {
                return num(0.0);
            }
            let outer = match f {
                Func::Sin => call(Func::Cos, a.clone()),
                Func::Cos => neg(call(Func::Sin, a.clone())),
                Func::Exp => call(Func::Exp, a.clone()),
                Func::Log => return div(da, a.clone()),
                Func::Sqrt => {
                    return div(da, mul(num(2.0), call(Func::Sqrt, a.clone())));
                }
                Func::Atan => return div(da, add(num(1.0), pow(a.clone(), 2.0))),
            };
            mul(outer, da)
        }
    }
}

// ---------------------------------------------------------------------------
// printing

const PREC_SUM: u8 = 1;
const PREC_PRODUCT: u8 = 2;
const PREC_UNARY: u8 = 3;
const PREC_POWER: u8 = 4;
const PREC_ATOM: u8 = 5;

fn precedence(n: &Node) -> u8 {
    match n {
        Node::Add(..) | Node::Sub(..) => PREC_SUM,
        Node::Mul(..) | Node::Div(..) => PREC_PRODUCT,
        Node::Neg(_) => PREC_UNARY,
        Node::Num(v) if v.is_sign_negative() => PREC_UNARY,
        Node::Pow(..) => PREC_POWER,
        _ => PREC_ATOM,
    }
}

fn write_node(f: &mut fmt::Formatter<'_>, n: &Node, min_prec: u8) -> fmt::Result {
    let paren = precedence(n) < min_prec;
    if paren {
        f.write_str("(")?;
    }
    match n {
        Node::Num(v) => write!(f, "{v}")?,
        Node::Var(k) => write!(f, "x{}", k + 1)?,
        Node::Param(p) => f.write_str(p)?,
        Node::Neg(a) => {
            f.write_str("-")?;
            write_node(f, a, PREC_UNARY)?;
        }
        Node::Add(a, b) | Node::Sub(a, b) => {
            write_node(f, a, PREC_SUM)?;
            f.write_str(if matches!(n, Node::Add(..)) { "+" } else { "-" })?;
            write_node(f, b, PREC_PRODUCT)?;
        }
        Node::Mul(a, b) | Node::Div(a, b) => {
            write_node(f, a, PREC_PRODUCT)?;
            f.write_str(if matches!(n, Node::Mul(..)) { "*" } else { "/" })?;
            write_node(f, b, PREC_UNARY)?;
        }
        Node::Pow(a, e) => {
            write_node(f, a, PREC_POWER)?;
            write!(f, "^{e}")?;
        }
        Node::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_node(f, a, 0)?;
            f.write_str(")")?;
        }
    }
    if paren {
        f.write_str(")")?;
    }
    Ok(())
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, &self.root, 0)
    }
}

// ---------------------------------------------------------------------------
// lexing and parsing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
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
                let lit = &text[start..i];
                let v: f64 = lit.parse().map_err(|_| ExprError::Syntax {
                    offset: start,
                    message: format!("malformed number `{lit}`"),
                })?;
                out.push((Tok::Num(v), start));
                continue;
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
                continue;
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => out.push((Tok::Op(c as char), start)),
            b'(' => out.push((Tok::LParen, start)),
            b')' => out.push((Tok::RParen, start)),
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(ExprError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        }
        i += 1;
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    dim: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].0
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, message: &str) -> ExprError {
        ExprError::Syntax {
            offset: self.offset(),
            message: message.to_string(),
        }
    }

    fn sum(&mut self) -> Result<Arc<Node>, ExprError> {
        let mut lhs = self.product()?;
        loop {
            match self.peek() {
                Tok::Op('+') => {
                    self.bump();
                    lhs = Arc::new(Node::Add(lhs, self.product()?));
                }
                Tok::Op('-') => {
                    self.bump();
                    lhs = Arc::new(Node::Sub(lhs, self.product()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn product(&mut self) -> Result<Arc<Node>, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Op('*') => {
                    self.bump();
                    lhs = Arc::new(Node::Mul(lhs, self.unary()?));
                }
                Tok::Op('/') => {
                    self.bump();
                    lhs = Arc::new(Node::Div(lhs, self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Arc<Node>, ExprError> {
        match self.peek() {
            Tok::Op('-') => {
                self.bump();
                Ok(Arc::new(Node::Neg(self.unary()?)))
            }
            Tok::Op('+') => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Arc<Node>, ExprError> {
        let mut base = self.primary()?;
        while let Tok::Op('^') = self.peek() {
            self.bump();
            let at = self.offset();
            let e = self.exponent()?;
            let value = const_value(&e).ok_or(ExprError::Syntax {
                offset: at,
                message: "exponent must be a numeric constant".into(),
            })?;
            // sqrt(u)^(2m) is stored as u^m so that even powers of R stay polynomial.
            base = match &*base {
                Node::Call(Func::Sqrt, inner) if value > 0.0 && value % 2.0 == 0.0 => {
                    pow(inner.clone(), value / 2.0)
                }
                _ => Arc::new(Node::Pow(base, value)),
            };
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<Arc<Node>, ExprError> {
        match self.peek() {
            Tok::Op('-') => {
                self.bump();
                Ok(Arc::new(Node::Neg(self.exponent()?)))
            }
            Tok::Op('+') => {
                self.bump();
                self.exponent()
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Arc<Node>, ExprError> {
        let (tok, at) = self.bump();
        match tok {
            Tok::Num(v) => Ok(num(v)),
            Tok::LParen => {
                let inner = self.sum()?;
                match self.bump() {
                    (Tok::RParen, _) => Ok(inner),
                    (_, at) => Err(ExprError::Syntax {
                        offset: at,
                        message: "expected `)`".into(),
                    }),
                }
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    let f = Func::from_name(&name)
                        .ok_or(ExprError::UnknownIdentifier { name, offset: at })?;
                    self.bump();
                    let arg = self.sum()?;
                    return match self.bump() {
                        (Tok::RParen, _) => Ok(Arc::new(Node::Call(f, arg))),
                        (_, at) => Err(ExprError::Syntax {
                            offset: at,
                            message: "expected `)` after function argument".into(),
                        }),
                    };
                }
                self.identifier(name, at)
            }
            Tok::End => Err(ExprError::Syntax {
                offset: at,
                message: "unexpected end of input".into(),
            }),
            Tok::RParen | Tok::Op(_) => Err(ExprError::Syntax {
                offset: at,
                message: "expected a number, identifier or `(`".into(),
            }),
        }
    }

    fn identifier(&self, name: String, at: usize) -> Result<Arc<Node>, ExprError> {
        if Func::from_name(&name).is_some() {
            return Err(ExprError::Syntax {
                offset: at,
                message: format!("function `{name}` needs an argument"),
            });
        }
        if name == "R" {
            return Ok(radius_node(self.dim));
        }
        if name == "pi" {
            return Ok(num(std::f64::consts::PI));
        }
        if let Some(digits) = name.strip_prefix('x') {
            if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                let index: usize = digits.parse().unwrap_or(usize::MAX);
                if index == 0 || index > self.dim {
                    return Err(ExprError::IndexOutOfRange {
                        index,
                        dim: self.dim,
                    });
                }
                return Ok(Arc::new(Node::Var(index - 1)));
            }
        }
        Ok(Arc::new(Node::Param(Arc::from(name.as_str()))))
    }
}

fn const_value(n: &Node) -> Option<f64> {
    match n {
        Node::Num(v) => Some(*v),
        Node::Neg(a) => const_value(a).map(|v| -v),
        Node::Add(a, b) => Some(const_value(a)? + const_value(b)?),
        Node::Sub(a, b) => Some(const_value(a)? - const_value(b)?),
        Node::Mul(a, b) => Some(const_value(a)? * const_value(b)?),
        Node::Div(a, b) => Some(const_value(a)? / const_value(b)?),
        Node::Pow(a, e) => pow_value(const_value(a)?, *e).ok(),
        Node::Call(f, a) => f.apply(const_value(a)?).ok(),
        Node::Var(_) | Node::Param(_) => None,
    }
    .filter(|v| v.is_finite())
}

/// Parse a comma-separated list of expressions (no expression contains a comma).
pub fn parse_list(text: &str, dim: usize) -> Result<Vec<Expression>, ExprError> {
    text.split(',').map(|s| Expression::parse(s, dim)).collect()
}
