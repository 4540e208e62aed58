//! Scalar-field expressions `V(x)`, `K(x)` over `x ∈ ℝⁿ`.
//!
//! Grammar (whitespace insignificant):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := base ('^' unary)?
//! base   := number | 'x' digit+ | func '(' expr ')' | '(' expr ')'
//! func   := exp | sin | cos | tanh | sqrt | sabs
//! ```
//!
//! `sabs(u) = sqrt(u² + 1e-12)` is a smooth absolute value. Exponentiation is
//! right-associative and binds tighter than unary minus, so `-x1^2 = -(x1^2)`.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use num_traits::Float;

use crate::error::{Error, Result};

const SABS_DELTA2: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Sin,
    Cos,
    Tanh,
    Sqrt,
    Sabs,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => Func::Exp,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tanh" => Func::Tanh,
            "sqrt" => Func::Sqrt,
            "sabs" => Func::Sabs,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tanh => "tanh",
            Func::Sqrt => "sqrt",
            Func::Sabs => "sabs",
        }
    }
}

/// Expression tree. Variables are stored zero-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl Node {
    fn max_var(&self) -> Option<usize> {
        match self {
            Node::Num(_) => None,
            Node::Var(i) => Some(*i),
            Node::Neg(a) | Node::Call(_, a) => a.max_var(),
            Node::Bin(_, a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    fn has_var(&self) -> bool {
        match self {
            Node::Num(_) => false,
            Node::Var(_) => true,
            Node::Neg(a) | Node::Call(_, a) => a.has_var(),
            Node::Bin(_, a, b) => a.has_var() || b.has_var(),
        }
    }

    /// Value of a variable-free subtree.
    fn const_value(&self) -> Option<f64> {
        match self {
            Node::Num(c) => Some(*c),
            Node::Var(_) => None,
            _ if self.has_var() => None,
            _ => eval_node::<f64>(self, &[0.0]).ok(),
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Num(c) => write!(f, "{c}"),
            Node::Var(i) => write!(f, "x{}", i + 1),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Bin(op, a, b) => {
                let s = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a}{s}{b})")
            }
            Node::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn syntax<T>(&self, offset: usize, message: impl Into<String>) -> Result<T> {
        Err(Error::Syntax {
            offset,
            message: message.into(),
        })
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == b'+' { BinOp::Add } else { BinOp::Sub };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == b'*' { BinOp::Mul } else { BinOp::Div };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Node::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.base()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<Node> {
        let start = match self.peek() {
            None => return self.syntax(self.src.len(), "unexpected end of input"),
            Some(_) => self.pos,
        };
        let c = self.src[start];
        if c == b'(' {
            self.pos += 1;
            let inner = self.expr()?;
            if self.peek() != Some(b')') {
                return self.syntax(self.pos, "expected `)`");
            }
            self.pos += 1;
            return Ok(inner);
        }
        if c.is_ascii_digit() || c == b'.' {
            return self.number();
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let mut end = start;
            while end < self.src.len() && (self.src[end].is_ascii_alphanumeric() || self.src[end] == b'_') {
                end += 1;
            }
            let name = core::str::from_utf8(&self.src[start..end]).unwrap_or("");
            self.pos = end;
            if name.len() > 1 && name.as_bytes()[0] == b'x' && name[1..].bytes().all(|b| b.is_ascii_digit()) {
                let idx: usize = name[1..].parse().map_err(|_| Error::Syntax {
                    offset: start,
                    message: "variable index too large".to_string(),
                })?;
                if idx == 0 || idx > self.dim {
                    return Err(Error::UnknownIdentifier {
                        offset: start,
                        name: name.to_string(),
                    });
                }
                return Ok(Node::Var(idx - 1));
            }
            let Some(func) = Func::from_name(name) else {
                return Err(Error::UnknownIdentifier {
                    offset: start,
                    name: name.to_string(),
                });
            };
            if self.peek() != Some(b'(') {
                return self.syntax(self.pos, format!("expected `(` after `{name}`"));
            }
            self.pos += 1;
            let mut args = Vec::new();
            if self.peek() != Some(b')') {
                args.push(self.expr()?);
                while self.peek() == Some(b',') {
                    self.pos += 1;
                    args.push(self.expr()?);
                }
            }
            if self.peek() != Some(b')') {
                return self.syntax(self.pos, "expected `)` or `,`");
            }
            self.pos += 1;
            if args.len() != 1 {
                return Err(Error::Arity {
                    offset: start,
                    name: name.to_string(),
                    expected: 1,
                    found: args.len(),
                });
            }
            return Ok(Node::Call(func, Box::new(args.pop().unwrap())));
        }
        self.syntax(start, format!("unexpected character `{}`", c as char))
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        let s = self.src;
        let mut end = start;
        while end < s.len() && s[end].is_ascii_digit() {
            end += 1;
        }
        if end < s.len() && s[end] == b'.' {
            end += 1;
            while end < s.len() && s[end].is_ascii_digit() {
                end += 1;
            }
        }
        if end - start == 1 && s[start] == b'.' {
            return self.syntax(start, "malformed number");
        }
        if end < s.len() && (s[end] == b'e' || s[end] == b'E') {
            let mut e = end + 1;
            if e < s.len() && (s[e] == b'+' || s[e] == b'-') {
                e += 1;
            }
            let digits = e;
            while e < s.len() && s[e].is_ascii_digit() {
                e += 1;
            }
            if e == digits {
                return self.syntax(end, "malformed exponent");
            }
            end = e;
        }
        let text = core::str::from_utf8(&s[start..end]).unwrap_or("");
        let value: f64 = text.parse().map_err(|_| Error::Syntax {
            offset: start,
            message: format!("malformed number `{text}`"),
        })?;
        if !value.is_finite() {
            return self.syntax(start, "number out of range");
        }
        self.pos = end;
        Ok(Node::Num(value))
    }
}

/// Arithmetic over which expressions can be evaluated.
pub trait Scalar: Clone {
    fn lift(c: f64, like: &Self) -> Self;
    fn value(&self) -> f64;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn exp(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn tanh(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn ln(&self) -> Self;
    fn powf(&self, c: f64) -> Self;
    fn powi(&self, k: i32) -> Self;
}

impl Scalar for f64 {
    fn lift(c: f64, _: &Self) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn exp(&self) -> Self {
        Float::exp(*self)
    }
    fn sin(&self) -> Self {
        Float::sin(*self)
    }
    fn cos(&self) -> Self {
        Float::cos(*self)
    }
    fn tanh(&self) -> Self {
        Float::tanh(*self)
    }
    fn sqrt(&self) -> Self {
        Float::sqrt(*self)
    }
    fn ln(&self) -> Self {
        Float::ln(*self)
    }
    fn powf(&self, c: f64) -> Self {
        Float::powf(*self, c)
    }
    fn powi(&self, k: i32) -> Self {
        Float::powi(*self, k)
    }
}

/// First-order dual number over an arbitrary scalar; nesting gives
/// forward-over-forward second derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual1<T> {
    pub v: T,
    pub d: T,
}

impl<T: Scalar> Scalar for Dual1<T> {
    fn lift(c: f64, like: &Self) -> Self {
        Dual1 {
            v: T::lift(c, &like.v),
            d: T::lift(0.0, &like.d),
        }
    }
    fn value(&self) -> f64 {
        self.v.value()
    }
    fn add(&self, o: &Self) -> Self {
        Dual1 {
            v: self.v.add(&o.v),
            d: self.d.add(&o.d),
        }
    }
    fn sub(&self, o: &Self) -> Self {
        Dual1 {
            v: self.v.sub(&o.v),
            d: self.d.sub(&o.d),
        }
    }
    fn mul(&self, o: &Self) -> Self {
        Dual1 {
            v: self.v.mul(&o.v),
            d: self.d.mul(&o.v).add(&self.v.mul(&o.d)),
        }
    }
    fn div(&self, o: &Self) -> Self {
        let q = self.v.div(&o.v);
        Dual1 {
            d: self.d.sub(&q.mul(&o.d)).div(&o.v),
            v: q,
        }
    }
    fn neg(&self) -> Self {
        Dual1 {
            v: self.v.neg(),
            d: self.d.neg(),
        }
    }
    fn exp(&self) -> Self {
        let e = self.v.exp();
        Dual1 {
            d: self.d.mul(&e),
            v: e,
        }
    }
    fn sin(&self) -> Self {
        Dual1 {
            v: self.v.sin(),
            d: self.d.mul(&self.v.cos()),
        }
    }
    fn cos(&self) -> Self {
        Dual1 {
            v: self.v.cos(),
            d: self.d.mul(&self.v.sin()).neg(),
        }
    }
    fn tanh(&self) -> Self {
        let t = self.v.tanh();
        let one = T::lift(1.0, &t);
        Dual1 {
            d: self.d.mul(&one.sub(&t.mul(&t))),
            v: t,
        }
    }
    fn sqrt(&self) -> Self {
        let s = self.v.sqrt();
        let two = T::lift(2.0, &s);
        Dual1 {
            d: self.d.div(&two.mul(&s)),
            v: s,
        }
    }
    fn ln(&self) -> Self {
        Dual1 {
            v: self.v.ln(),
            d: self.d.div(&self.v),
        }
    }
    fn powf(&self, c: f64) -> Self {
        let cc = T::lift(c, &self.v);
        Dual1 {
            v: self.v.powf(c),
            d: self.d.mul(&cc.mul(&self.v.powf(c - 1.0))),
        }
    }
    fn powi(&self, k: i32) -> Self {
        if k == 0 {
            return Self::lift(1.0, self);
        }
        let kk = T::lift(k as f64, &self.v);
        Dual1 {
            v: self.v.powi(k),
            d: self.d.mul(&kk.mul(&self.v.powi(k - 1))),
        }
    }
}

/// Second-order forward-mode number: value, gradient and Hessian (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct Dual2 {
    pub v: f64,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

impl Dual2 {
    pub fn variable(x: f64, i: usize, n: usize) -> Self {
        let mut g = vec![0.0; n];
        g[i] = 1.0;
        Dual2 {
            v: x,
            g,
            h: vec![0.0; n * n],
        }
    }

    fn n(&self) -> usize {
        self.g.len()
    }

    /// Compose with a scalar function given its value and first two
    /// derivatives at `self.v`.
    fn chain(&self, f0: f64, f1: f64, f2: f64) -> Self {
        let n = self.n();
        let g = self.g.iter().map(|gi| f1 * gi).collect();
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                h[i * n + j] = f1 * self.h[i * n + j] + f2 * self.g[i] * self.g[j];
            }
        }
        Dual2 { v: f0, g, h }
    }
}

impl Scalar for Dual2 {
    fn lift(c: f64, like: &Self) -> Self {
        let n = like.n();
        Dual2 {
            v: c,
            g: vec![0.0; n],
            h: vec![0.0; n * n],
        }
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn add(&self, o: &Self) -> Self {
        Dual2 {
            v: self.v + o.v,
            g: self.g.iter().zip(&o.g).map(|(a, b)| a + b).collect(),
            h: self.h.iter().zip(&o.h).map(|(a, b)| a + b).collect(),
        }
    }
    fn sub(&self, o: &Self) -> Self {
        Dual2 {
            v: self.v - o.v,
            g: self.g.iter().zip(&o.g).map(|(a, b)| a - b).collect(),
            h: self.h.iter().zip(&o.h).map(|(a, b)| a - b).collect(),
        }
    }
    fn mul(&self, o: &Self) -> Self {
        let n = self.n();
        let g = (0..n).map(|i| self.v * o.g[i] + o.v * self.g[i]).collect();
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                h[i * n + j] = self.v * o.h[i * n + j]
                    + o.v * self.h[i * n + j]
                    + (self.g[i] * o.g[j] + o.g[i] * self.g[j]);
            }
        }
        Dual2 { v: self.v * o.v, g, h }
    }
    fn div(&self, o: &Self) -> Self {
        let r = o.v.recip();
        self.mul(&o.chain(r, -r * r, 2.0 * r * r * r))
    }
    fn neg(&self) -> Self {
        self.chain(-self.v, -1.0, 0.0)
    }
    fn exp(&self) -> Self {
        let e = Float::exp(self.v);
        self.chain(e, e, e)
    }
    fn sin(&self) -> Self {
        let (s, c) = (Float::sin(self.v), Float::cos(self.v));
        self.chain(s, c, -s)
    }
    fn cos(&self) -> Self {
        let (s, c) = (Float::sin(self.v), Float::cos(self.v));
        self.chain(c, -s, -c)
    }
    fn tanh(&self) -> Self {
        let t = Float::tanh(self.v);
        let s2 = 1.0 - t * t;
        self.chain(t, s2, -2.0 * t * s2)
    }
    fn sqrt(&self) -> Self {
        let s = Float::sqrt(self.v);
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }
    fn ln(&self) -> Self {
        self.chain(Float::ln(self.v), 1.0 / self.v, -1.0 / (self.v * self.v))
    }
    fn powf(&self, c: f64) -> Self {
        let x = self.v;
        self.chain(
            Float::powf(x, c),
            c * Float::powf(x, c - 1.0),
            c * (c - 1.0) * Float::powf(x, c - 2.0),
        )
    }
    fn powi(&self, k: i32) -> Self {
        let x = self.v;
        let f0 = Float::powi(x, k);
        let f1 = if k == 0 { 0.0 } else { k as f64 * Float::powi(x, k - 1) };
        let f2 = if k == 0 || k == 1 {
            0.0
        } else {
            (k * (k - 1)) as f64 * Float::powi(x, k - 2)
        };
        self.chain(f0, f1, f2)
    }
}

fn eval_node<S: Scalar>(node: &Node, vars: &[S]) -> Result<S> {
    Ok(match node {
        Node::Num(c) => S::lift(*c, &vars[0]),
        Node::Var(i) => vars[*i].clone(),
        Node::Neg(a) => eval_node(a, vars)?.neg(),
        Node::Call(func, a) => {
            let u = eval_node(a, vars)?;
            match func {
                Func::Exp => u.exp(),
                Func::Sin => u.sin(),
                Func::Cos => u.cos(),
                Func::Tanh => u.tanh(),
                Func::Sqrt => {
                    if !(u.value() > 0.0) {
                        return Err(Error::Domain(format!("sqrt of {}", u.value())));
                    }
                    u.sqrt()
                }
                Func::Sabs => u.mul(&u).add(&S::lift(SABS_DELTA2, &u)).sqrt(),
            }
        }
        Node::Bin(op, a, b) => {
            let x = eval_node(a, vars)?;
            if *op == BinOp::Pow {
                if let Some(c) = b.const_value() {
                    if c == Float::round(c) && Float::abs(c) < 1024.0 {
                        if c < 0.0 && x.value() == 0.0 {
                            return Err(Error::Domain("zero raised to a negative power".into()));
                        }
                        return Ok(x.powi(c as i32));
                    }
                    if !(x.value() > 0.0) {
                        return Err(Error::Domain(format!("{} raised to non-integer power {c}", x.value())));
                    }
                    return Ok(x.powf(c));
                }
                let y = eval_node(b, vars)?;
                if !(x.value() > 0.0) {
                    return Err(Error::Domain(format!("{} raised to a variable power", x.value())));
                }
                return Ok(y.mul(&x.ln()).exp());
            }
            let y = eval_node(b, vars)?;
            match op {
                BinOp::Add => x.add(&y),
                BinOp::Sub => x.sub(&y),
                BinOp::Mul => x.mul(&y),
                BinOp::Div => {
                    if y.value() == 0.0 {
                        return Err(Error::Domain("division by zero".into()));
                    }
                    x.div(&y)
                }
                BinOp::Pow => unreachable!(),
            }
        }
    })
}

/// Value, gradient and Hessian (row-major, `dim × dim`) of a scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivatives {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<f64>,
}

/// A parsed scalar field over ℝⁿ. Immutable and reentrant.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarFieldExpr {
    ast: Node,
    dim: usize,
}

impl ScalarFieldExpr {
    pub fn parse(text: &str, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("expression dimension must be at least 1".into()));
        }
        let mut p = Parser {
            src: text.as_bytes(),
            pos: 0,
            dim,
        };
        let ast = p.expr()?;
        if let Some(c) = p.peek() {
            return Err(Error::Syntax {
                offset: p.pos,
                message: format!("unexpected trailing `{}`", c as char),
            });
        }
        debug_assert!(ast.max_var().map_or(true, |i| i < dim));
        Ok(Self { ast, dim })
    }

    pub fn constant(c: f64, dim: usize) -> Self {
        Self {
            ast: Node::Num(c),
            dim,
        }
    }

    pub fn ast(&self) -> &Node {
        &self.ast
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// True when the expression references no variable.
    pub fn is_constant(&self) -> bool {
        self.ast.max_var().is_none()
    }

    /// Fully parenthesized text that re-parses to an equal tree.
    pub fn unparse(&self) -> String {
        self.ast.to_string()
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Invalid(format!(
                "point has {} coordinates, expression expects {}",
                x.len(),
                self.dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite evaluation point".into()));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let v = eval_node(&self.ast, x)?;
        if !v.is_finite() {
            return Err(Error::Domain(format!("non-finite value at {x:?}")));
        }
        Ok(v)
    }

    /// Exact value, gradient and Hessian by second-order forward mode.
    pub fn eval_with_derivatives(&self, x: &[f64]) -> Result<Derivatives> {
        self.check_point(x)?;
        let n = self.dim;
        let vars: Vec<Dual2> = (0..n).map(|i| Dual2::variable(x[i], i, n)).collect();
        let d = eval_node(&self.ast, &vars)?;
        if !d.v.is_finite() || d.g.iter().chain(&d.h).any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite derivatives at {x:?}")));
        }
        Ok(Derivatives {
            value: d.v,
            gradient: d.g,
            hessian: d.h,
        })
    }

    /// Hessian as the Jacobian of the forward-mode gradient (nested duals).
    /// Independent of [`Self::eval_with_derivatives`]; used for cross-checks.
    pub fn hessian_forward_over_forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let n = self.dim;
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let vars: Vec<Dual1<Dual1<f64>>> = (0..n)
                    .map(|k| Dual1 {
                        v: Dual1 {
                            v: x[k],
                            d: if k == i { 1.0 } else { 0.0 },
                        },
                        d: Dual1 {
                            v: if k == j { 1.0 } else { 0.0 },
                            d: 0.0,
                        },
                    })
                    .collect();
                h[i * n + j] = eval_node(&self.ast, &vars)?.d.d;
            }
        }
        Ok(h)
    }
}

impl fmt::Display for ScalarFieldExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.ast.fmt(f)
    }
}
