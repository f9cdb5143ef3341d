//! Channel-function expressions: parsing, evaluation, symbolic derivatives.
//!
//! A channel function `g_i(w, y[1], …, y[i-1])` (and, for continuous-time
//! systems, `g(t, w, y[1])`) is written in a small closed language:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor ('*' factor)*
//! factor := ['-'] atom
//! atom   := number | 'w' | 'y' '[' int ']' | 't' | func '(' expr ')' | '(' expr ')'
//! func   := 'tanh' | 'sin' | 'exp'
//! ```
//!
//! Every primitive is smooth and defined on all of ℝ, so evaluation is total
//! and derivatives never hit a singularity. There is no division or absolute
//! value on purpose.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use core::fmt;
use core::str::FromStr;

use crate::math;

/// A free variable of a channel expression.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    /// The message or input draw `w` (`W_i`, or the shared `M`).
    W,
    /// A past output `y[j]`, indexed from 1.
    Y(usize),
    /// Time; only meaningful for continuous-time channel functions.
    T,
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::W => f.write_str("w"),
            Var::Y(j) => write!(f, "y[{j}]"),
            Var::T => f.write_str("t"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Tanh,
    Sin,
    Exp,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Tanh => "tanh",
            Func::Sin => "sin",
            Func::Exp => "exp",
        }
    }

    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Tanh => math::tanh(x),
            Func::Sin => math::sin(x),
            Func::Exp => math::exp(x),
        }
    }
}

/// Expression tree. Immutable once built; cheap to share across threads.
#[derive(Clone, Debug, PartialEq)]
pub enum ChannelExpr {
    Const(f64),
    Var(Var),
    Add(Box<ChannelExpr>, Box<ChannelExpr>),
    Sub(Box<ChannelExpr>, Box<ChannelExpr>),
    Mul(Box<ChannelExpr>, Box<ChannelExpr>),
    Neg(Box<ChannelExpr>),
    Call(Func, Box<ChannelExpr>),
}

/// Variable values for [`ChannelExpr::eval`]. `y[j]` reads `y[j - 1]`.
#[derive(Clone, Copy, Debug)]
pub struct Binding<'a> {
    pub w: f64,
    pub y: &'a [f64],
    pub t: Option<f64>,
}

impl<'a> Binding<'a> {
    pub fn new(w: f64, y: &'a [f64]) -> Self {
        Self { w, y, t: None }
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.t = Some(t);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: &'static str },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("invalid y-index at byte {offset}: {message}")]
    InvalidIndex { offset: usize, message: &'static str },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. }
            | ParseError::InvalidIndex { offset, .. } => *offset,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("y[{index}] is unbound (binding holds {available} outputs)")]
    UnboundY { index: usize, available: usize },
    #[error("t is unbound")]
    UnboundT,
}

impl ChannelExpr {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut p = Parser { src: text.as_bytes(), pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.syntax("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn var(v: Var) -> Self {
        ChannelExpr::Var(v)
    }

    pub fn constant(c: f64) -> Self {
        ChannelExpr::Const(c)
    }

    pub fn eval(&self, b: &Binding<'_>) -> Result<f64, EvalError> {
        Ok(match self {
            ChannelExpr::Const(c) => *c,
            ChannelExpr::Var(Var::W) => b.w,
            ChannelExpr::Var(Var::Y(j)) => match b.y.get(j - 1) {
                Some(v) => *v,
                None => {
                    return Err(EvalError::UnboundY {
                        index: *j,
                        available: b.y.len(),
                    })
                }
            },
            ChannelExpr::Var(Var::T) => b.t.ok_or(EvalError::UnboundT)?,
            ChannelExpr::Add(l, r) => l.eval(b)? + r.eval(b)?,
            ChannelExpr::Sub(l, r) => l.eval(b)? - r.eval(b)?,
            ChannelExpr::Mul(l, r) => l.eval(b)? * r.eval(b)?,
            ChannelExpr::Neg(e) => -e.eval(b)?,
            ChannelExpr::Call(f, e) => f.apply(e.eval(b)?),
        })
    }

    /// Evaluation for expressions already validated against the history
    /// length. Panics if a referenced `y[j]` is out of range.
    #[inline]
    pub(crate) fn value_at(&self, w: f64, y: &[f64], t: f64) -> f64 {
        match self {
            ChannelExpr::Const(c) => *c,
            ChannelExpr::Var(Var::W) => w,
            ChannelExpr::Var(Var::Y(j)) => y[j - 1],
            ChannelExpr::Var(Var::T) => t,
            ChannelExpr::Add(l, r) => l.value_at(w, y, t) + r.value_at(w, y, t),
            ChannelExpr::Sub(l, r) => l.value_at(w, y, t) - r.value_at(w, y, t),
            ChannelExpr::Mul(l, r) => l.value_at(w, y, t) * r.value_at(w, y, t),
            ChannelExpr::Neg(e) => -e.value_at(w, y, t),
            ChannelExpr::Call(f, e) => f.apply(e.value_at(w, y, t)),
        }
    }

    /// Symbolic partial derivative with respect to `var`, with constant
    /// folding of the result.
    pub fn derivative(&self, var: Var) -> ChannelExpr {
        use ChannelExpr::*;
        match self {
            Const(_) => Const(0.0),
            Var(v) => Const(if *v == var { 1.0 } else { 0.0 }),
            Add(l, r) => add(l.derivative(var), r.derivative(var)),
            Sub(l, r) => sub(l.derivative(var), r.derivative(var)),
            Mul(l, r) => add(
                mul(l.derivative(var), (**r).clone()),
                mul((**l).clone(), r.derivative(var)),
            ),
            Neg(e) => neg(e.derivative(var)),
            Call(f, e) => {
                let inner = e.derivative(var);
                if inner.is_zero() {
                    return Const(0.0);
                }
                let outer = match f {
                    Func::Tanh => {
                        let th = call(Func::Tanh, (**e).clone());
                        sub(Const(1.0), mul(th.clone(), th))
                    }
                    // cos(u) = sin(u + π/2) keeps the function set closed.
                    Func::Sin => call(
                        Func::Sin,
                        add((**e).clone(), Const(core::f64::consts::FRAC_PI_2)),
                    ),
                    Func::Exp => call(Func::Exp, (**e).clone()),
                };
                mul(outer, inner)
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ChannelExpr::Const(c) if *c == 0.0)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            ChannelExpr::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// All `y` indices referenced anywhere in the tree.
    pub fn y_indices(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.visit_vars(&mut |v| {
            if let Var::Y(j) = v {
                out.insert(j);
            }
        });
        out
    }

    pub fn max_y_index(&self) -> usize {
        self.y_indices().last().copied().unwrap_or(0)
    }

    pub fn references(&self, var: Var) -> bool {
        let mut hit = false;
        self.visit_vars(&mut |v| hit |= v == var);
        hit
    }

    pub fn depth(&self) -> usize {
        use ChannelExpr::*;
        match self {
            Const(_) | Var(_) => 1,
            Add(l, r) | Sub(l, r) | Mul(l, r) => 1 + l.depth().max(r.depth()),
            Neg(e) | Call(_, e) => 1 + e.depth(),
        }
    }

    fn visit_vars(&self, f: &mut impl FnMut(Var)) {
        use ChannelExpr::*;
        match self {
            Const(_) => {}
            Var(v) => f(*v),
            Add(l, r) | Sub(l, r) | Mul(l, r) => {
                l.visit_vars(f);
                r.visit_vars(f);
            }
            Neg(e) | Call(_, e) => e.visit_vars(f),
        }
    }

    /// Replaces variables for which `f` returns a substitute; other nodes are
    /// copied as-is (no folding, so the result keeps the original shape).
    pub fn substitute(&self, f: &impl Fn(Var) -> Option<ChannelExpr>) -> ChannelExpr {
        use ChannelExpr::*;
        match self {
            Const(c) => Const(*c),
            Var(v) => f(*v).unwrap_or(Var(*v)),
            Add(l, r) => Add(Box::new(l.substitute(f)), Box::new(r.substitute(f))),
            Sub(l, r) => Sub(Box::new(l.substitute(f)), Box::new(r.substitute(f))),
            Mul(l, r) => Mul(Box::new(l.substitute(f)), Box::new(r.substitute(f))),
            Neg(e) => Neg(Box::new(e.substitute(f))),
            Call(func, e) => Call(*func, Box::new(e.substitute(f))),
        }
    }

    /// With `y` and `t` fixed, returns `(slope, intercept)` if the expression
    /// is affine in `w`, evaluating every `w`-free subtree numerically.
    pub fn affine_in_w(&self, y: &[f64], t: f64) -> Option<(f64, f64)> {
        use ChannelExpr::*;
        Some(match self {
            Const(c) => (0.0, *c),
            Var(crate::expr::Var::W) => (1.0, 0.0),
            Var(_) => (0.0, self.value_at(0.0, y, t)),
            Add(l, r) => {
                let (a, b) = l.affine_in_w(y, t)?;
                let (c, d) = r.affine_in_w(y, t)?;
                (a + c, b + d)
            }
            Sub(l, r) => {
                let (a, b) = l.affine_in_w(y, t)?;
                let (c, d) = r.affine_in_w(y, t)?;
                (a - c, b - d)
            }
            Mul(l, r) => {
                let (a, b) = l.affine_in_w(y, t)?;
                let (c, d) = r.affine_in_w(y, t)?;
                if a == 0.0 {
                    (b * c, b * d)
                } else if c == 0.0 {
                    (a * d, b * d)
                } else {
                    return None;
                }
            }
            Neg(e) => {
                let (a, b) = e.affine_in_w(y, t)?;
                (-a, -b)
            }
            Call(f, e) => {
                let (a, b) = e.affine_in_w(y, t)?;
                if a != 0.0 {
                    return None;
                }
                (0.0, f.apply(b))
            }
        })
    }

    fn precedence(&self) -> u8 {
        match self {
            ChannelExpr::Add(..) | ChannelExpr::Sub(..) => 1,
            ChannelExpr::Mul(..) => 2,
            ChannelExpr::Neg(_) => 3,
            ChannelExpr::Const(c) if c.is_sign_negative() => 3,
            _ => 4,
        }
    }

    fn write_at(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        let paren = self.precedence() < min_prec;
        if paren {
            f.write_str("(")?;
        }
        match self {
            ChannelExpr::Const(c) => write!(f, "{c:?}")?,
            ChannelExpr::Var(v) => write!(f, "{v}")?,
            ChannelExpr::Add(l, r) => {
                l.write_at(f, 1)?;
                f.write_str(" + ")?;
                r.write_at(f, 2)?;
            }
            ChannelExpr::Sub(l, r) => {
                l.write_at(f, 1)?;
                f.write_str(" - ")?;
                r.write_at(f, 2)?;
            }
            ChannelExpr::Mul(l, r) => {
                l.write_at(f, 2)?;
                f.write_str("*")?;
                r.write_at(f, 3)?;
            }
            ChannelExpr::Neg(e) => {
                f.write_str("-")?;
                e.write_at(f, 4)?;
            }
            ChannelExpr::Call(func, e) => {
                write!(f, "{}(", func.name())?;
                e.write_at(f, 0)?;
                f.write_str(")")?;
            }
        }
        if paren {
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// Canonical printer; `parse(print(e))` reproduces any parsed tree exactly.
impl fmt::Display for ChannelExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_at(f, 0)
    }
}

impl FromStr for ChannelExpr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ChannelExpr::parse(s)
    }
}

fn add(l: ChannelExpr, r: ChannelExpr) -> ChannelExpr {
    match (l.as_const(), r.as_const()) {
        (Some(a), Some(b)) => ChannelExpr::Const(a + b),
        (Some(a), None) if a == 0.0 => r,
        (None, Some(b)) if b == 0.0 => l,
        _ => ChannelExpr::Add(Box::new(l), Box::new(r)),
    }
}

fn sub(l: ChannelExpr, r: ChannelExpr) -> ChannelExpr {
    match (l.as_const(), r.as_const()) {
        (Some(a), Some(b)) => ChannelExpr::Const(a - b),
        (Some(a), None) if a == 0.0 => neg(r),
        (None, Some(b)) if b == 0.0 => l,
        _ => ChannelExpr::Sub(Box::new(l), Box::new(r)),
    }
}

fn mul(l: ChannelExpr, r: ChannelExpr) -> ChannelExpr {
    match (l.as_const(), r.as_const()) {
        (Some(a), Some(b)) => ChannelExpr::Const(a * b),
        (Some(a), _) | (_, Some(a)) if a == 0.0 => ChannelExpr::Const(0.0),
        (Some(a), None) if a == 1.0 => r,
        (None, Some(b)) if b == 1.0 => l,
        _ => ChannelExpr::Mul(Box::new(l), Box::new(r)),
    }
}

fn neg(e: ChannelExpr) -> ChannelExpr {
    match e {
        ChannelExpr::Const(c) => ChannelExpr::Const(-c),
        ChannelExpr::Neg(inner) => *inner,
        other => ChannelExpr::Neg(Box::new(other)),
    }
}

fn call(f: Func, e: ChannelExpr) -> ChannelExpr {
    match e.as_const() {
        Some(c) => ChannelExpr::Const(f.apply(c)),
        None => ChannelExpr::Call(f, Box::new(e)),
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn syntax(&self, message: &'static str) -> ParseError {
        ParseError::Syntax { offset: self.pos, message }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8, message: &'static str) -> Result<(), ParseError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.syntax(message))
        }
    }

    fn expr(&mut self) -> Result<ChannelExpr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = ChannelExpr::Add(Box::new(lhs), Box::new(rhs));
                }
                Some(b'-') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = ChannelExpr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<ChannelExpr, ParseError> {
        let mut lhs = self.factor()?;
        while self.peek() == Some(b'*') {
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = ChannelExpr::Mul(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<ChannelExpr, ParseError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            Ok(ChannelExpr::Neg(Box::new(self.atom()?)))
        } else {
            self.atom()
        }
    }

    fn atom(&mut self) -> Result<ChannelExpr, ParseError> {
        match self.peek() {
            None => Err(self.syntax("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')', "expected `)`")?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let (start, text) = self.number_token();
                text.parse::<f64>()
                    .map(ChannelExpr::Const)
                    .map_err(|_| ParseError::Syntax { offset: start, message: "malformed number" })
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let ident = core::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
                match ident {
                    "w" => Ok(ChannelExpr::Var(Var::W)),
                    "t" => Ok(ChannelExpr::Var(Var::T)),
                    "y" => self.y_index(),
                    "tanh" | "sin" | "exp" => {
                        let func = match ident {
                            "tanh" => Func::Tanh,
                            "sin" => Func::Sin,
                            _ => Func::Exp,
                        };
                        self.expect(b'(', "expected `(` after function name")?;
                        let arg = self.expr()?;
                        self.expect(b')', "expected `)`")?;
                        Ok(ChannelExpr::Call(func, Box::new(arg)))
                    }
                    _ => Err(ParseError::UnknownIdentifier {
                        offset: start,
                        name: ident.to_string(),
                    }),
                }
            }
            Some(_) => Err(self.syntax("expected a number, variable, function or `(`")),
        }
    }

    fn y_index(&mut self) -> Result<ChannelExpr, ParseError> {
        self.expect(b'[', "expected `[` after `y`")?;
        let start = match self.peek() {
            Some(c) if c.is_ascii_digit() || c == b'.' => self.pos,
            _ => {
                return Err(ParseError::InvalidIndex {
                    offset: self.pos,
                    message: "y-index must be a positive integer",
                })
            }
        };
        let (_, text) = self.number_token();
        if !text.bytes().all(|b| b.is_ascii_digit()) {
            return Err(ParseError::InvalidIndex {
                offset: start,
                message: "y-index must be an integer",
            });
        }
        let j: usize = text.parse().map_err(|_| ParseError::InvalidIndex {
            offset: start,
            message: "y-index out of range",
        })?;
        if j == 0 {
            return Err(ParseError::InvalidIndex {
                offset: start,
                message: "y-index must be >= 1",
            });
        }
        self.expect(b']', "expected `]`")?;
        Ok(ChannelExpr::Var(Var::Y(j)))
    }

    /// Scans `digits ['.' digits] [('e'|'E') ['+'|'-'] digits]`.
    fn number_token(&mut self) -> (usize, &str) {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
        };
        digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if self.src.get(self.pos).is_some_and(u8::is_ascii_digit) {
                digits(self);
            } else {
                self.pos = save;
            }
        }
        let text = core::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        (start, text)
    }
}
