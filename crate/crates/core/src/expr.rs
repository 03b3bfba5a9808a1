//! Arithmetic expressions over the phase variable `x` and the parameter `a`.
//!
//! Branch functions `f_k(a, x)`, breakpoint functions `b_k(a)` and the
//! point function `X(a)` are all stored as [`Expr`] trees. Evaluation is
//! generic over [`Scalar`], so the same tree yields values, first
//! derivatives ([`Dual`]) and second derivatives (`Dual<Dual<f64>>`)
//! without symbolic differentiation.
//!
//! The textual grammar (see [`parse`]) is infix with precedence
//! `^` > unary `-` > `*`,`/` > `+`,`-`; functions `abs`, `min`, `max`;
//! integer exponents only.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

mod parse;

pub use parse::{parse, ExprParseError};

/// The two free variables of the DSL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X,
    A,
}

/// Expression tree. Children are reference counted so substitution can
/// share subtrees instead of copying them.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Arc<Expr>),
    Add(Arc<Expr>, Arc<Expr>),
    Sub(Arc<Expr>, Arc<Expr>),
    Mul(Arc<Expr>, Arc<Expr>),
    Div(Arc<Expr>, Arc<Expr>),
    Pow(Arc<Expr>, i32),
    Abs(Arc<Expr>),
    Min(Arc<Expr>, Arc<Expr>),
    Max(Arc<Expr>, Arc<Expr>),
}

/// Numeric type an [`Expr`] can be evaluated in.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(v: f64) -> Self;
    /// Plain value, used for branch selection in `abs`/`min`/`max`.
    fn value(&self) -> f64;
    fn powi(self, n: i32) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn constant(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
}

/// Forward-mode dual number `re + eps·du`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub du: T,
}

impl<T: Scalar> Dual<T> {
    pub fn new(re: T, du: T) -> Self {
        Dual { re, du }
    }
    /// A variable with unit tangent.
    pub fn var(re: T) -> Self {
        Dual {
            re,
            du: T::constant(1.0),
        }
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Dual::new(self.re + o.re, self.du + o.du)
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Dual::new(self.re - o.re, self.du - o.du)
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Dual::new(self.re * o.re, self.du * o.re + self.re * o.du)
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let q = self.re / o.re;
        Dual::new(q, (self.du - q * o.du) / o.re)
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual::new(-self.re, -self.du)
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    fn constant(v: f64) -> Self {
        Dual::new(T::constant(v), T::constant(0.0))
    }
    fn value(&self) -> f64 {
        self.re.value()
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Self::constant(1.0);
        }
        let lower = self.re.powi(n - 1);
        Dual::new(lower * self.re, T::constant(n as f64) * lower * self.du)
    }
}

/// Value, first and second derivative with respect to one variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Expr {
    pub fn num(v: f64) -> Arc<Expr> {
        Arc::new(Expr::Num(v))
    }

    pub fn x() -> Arc<Expr> {
        Arc::new(Expr::Var(Var::X))
    }

    pub fn a() -> Arc<Expr> {
        Arc::new(Expr::Var(Var::A))
    }

    /// Evaluate at `(x, a)` in any scalar type.
    pub fn eval_in<S: Scalar>(&self, x: S, a: S) -> S {
        match self {
            Expr::Num(v) => S::constant(*v),
            Expr::Var(Var::X) => x,
            Expr::Var(Var::A) => a,
            Expr::Neg(e) => -e.eval_in(x, a),
            Expr::Add(l, r) => l.eval_in(x, a) + r.eval_in(x, a),
            Expr::Sub(l, r) => l.eval_in(x, a) - r.eval_in(x, a),
            Expr::Mul(l, r) => l.eval_in(x, a) * r.eval_in(x, a),
            Expr::Div(l, r) => l.eval_in(x, a) / r.eval_in(x, a),
            Expr::Pow(b, n) => b.eval_in(x, a).powi(*n),
            Expr::Abs(e) => {
                let v = e.eval_in(x, a);
                if v.value() < 0.0 {
                    -v
                } else {
                    v
                }
            }
            Expr::Min(l, r) => {
                let (lv, rv) = (l.eval_in(x, a), r.eval_in(x, a));
                if rv.value() < lv.value() {
                    rv
                } else {
                    lv
                }
            }
            Expr::Max(l, r) => {
                let (lv, rv) = (l.eval_in(x, a), r.eval_in(x, a));
                if rv.value() > lv.value() {
                    rv
                } else {
                    lv
                }
            }
        }
    }

    #[inline]
    pub fn eval(&self, x: f64, a: f64) -> f64 {
        self.eval_in(x, a)
    }

    /// Value and partial derivative with respect to `var`.
    pub fn eval_d(&self, x: f64, a: f64, var: Var) -> (f64, f64) {
        let (dx, da) = match var {
            Var::X => (Dual::var(x), Dual::new(a, 0.0)),
            Var::A => (Dual::new(x, 0.0), Dual::var(a)),
        };
        let r = self.eval_in(dx, da);
        (r.re, r.du)
    }

    /// Value with first and second partial derivative in `var`.
    pub fn eval_d2(&self, x: f64, a: f64, var: Var) -> Jet2 {
        let lift = |v: f64, active: bool| {
            if active {
                Dual::new(Dual::var(v), Dual::new(1.0, 0.0))
            } else {
                Dual::new(Dual::new(v, 0.0), Dual::new(0.0, 0.0))
            }
        };
        let r = self.eval_in(lift(x, var == Var::X), lift(a, var == Var::A));
        Jet2 {
            value: r.re.re,
            d1: r.du.re,
            d2: r.du.du,
        }
    }

    pub fn depends_on(&self, var: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(e) | Expr::Pow(e, _) | Expr::Abs(e) => e.depends_on(var),
            Expr::Add(l, r)
            | Expr::Sub(l, r)
            | Expr::Mul(l, r)
            | Expr::Div(l, r)
            | Expr::Min(l, r)
            | Expr::Max(l, r) => l.depends_on(var) || r.depends_on(var),
        }
    }

    /// Replace every occurrence of `var` by `with`.
    pub fn substitute(self: &Arc<Self>, var: Var, with: &Arc<Expr>) -> Arc<Expr> {
        match &**self {
            Expr::Num(_) => self.clone(),
            Expr::Var(v) if *v == var => with.clone(),
            Expr::Var(_) => self.clone(),
            Expr::Neg(e) => neg(e.substitute(var, with)),
            Expr::Add(l, r) => add(l.substitute(var, with), r.substitute(var, with)),
            Expr::Sub(l, r) => sub(l.substitute(var, with), r.substitute(var, with)),
            Expr::Mul(l, r) => mul(l.substitute(var, with), r.substitute(var, with)),
            Expr::Div(l, r) => div(l.substitute(var, with), r.substitute(var, with)),
            Expr::Pow(b, n) => Arc::new(Expr::Pow(b.substitute(var, with), *n)),
            Expr::Abs(e) => Arc::new(Expr::Abs(e.substitute(var, with))),
            Expr::Min(l, r) => Arc::new(Expr::Min(l.substitute(var, with), r.substitute(var, with))),
            Expr::Max(l, r) => Arc::new(Expr::Max(l.substitute(var, with), r.substitute(var, with))),
        }
    }

    fn as_num(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            _ => None,
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Num(v) if v.is_sign_negative() => 3,
            Expr::Pow(..) => 4,
            _ => 5,
        }
    }
}

// Smart constructors: fold constants and drop neutral elements. They keep
// E_1 and the identity conjugation exact.

pub fn neg(e: Arc<Expr>) -> Arc<Expr> {
    match &*e {
        Expr::Num(v) => Expr::num(-v),
        Expr::Neg(inner) => inner.clone(),
        _ => Arc::new(Expr::Neg(e)),
    }
}

pub fn add(l: Arc<Expr>, r: Arc<Expr>) -> Arc<Expr> {
    match (l.as_num(), r.as_num()) {
        (Some(a), Some(b)) => Expr::num(a + b),
        (Some(a), None) if a == 0.0 => r,
        (None, Some(b)) if b == 0.0 => l,
        _ => Arc::new(Expr::Add(l, r)),
    }
}

pub fn sub(l: Arc<Expr>, r: Arc<Expr>) -> Arc<Expr> {
    match (l.as_num(), r.as_num()) {
        (Some(a), Some(b)) => Expr::num(a - b),
        (None, Some(b)) if b == 0.0 => l,
        (Some(a), None) if a == 0.0 => neg(r),
        _ => Arc::new(Expr::Sub(l, r)),
    }
}

pub fn mul(l: Arc<Expr>, r: Arc<Expr>) -> Arc<Expr> {
    match (l.as_num(), r.as_num()) {
        (Some(a), Some(b)) => Expr::num(a * b),
        (Some(a), None) if a == 1.0 => r,
        (None, Some(b)) if b == 1.0 => l,
        (Some(a), None) if a == -1.0 => neg(r),
        (None, Some(b)) if b == -1.0 => neg(l),
        _ => Arc::new(Expr::Mul(l, r)),
    }
}

pub fn div(l: Arc<Expr>, r: Arc<Expr>) -> Arc<Expr> {
    match (l.as_num(), r.as_num()) {
        (Some(a), Some(b)) => Expr::num(a / b),
        (None, Some(b)) if b == 1.0 => l,
        _ => Arc::new(Expr::Div(l, r)),
    }
}

/// `scale * e + offset`, simplified.
pub fn affine(scale: f64, e: Arc<Expr>, offset: f64) -> Arc<Expr> {
    add(mul(Expr::num(scale), e), Expr::num(offset))
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
            if e.precedence() < min_prec {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(Var::X) => f.write_str("x"),
            Expr::Var(Var::A) => f.write_str("a"),
            Expr::Neg(e) => {
                f.write_str("-")?;
                child(f, e, 3)
            }
            Expr::Add(l, r) => {
                child(f, l, 1)?;
                f.write_str(" + ")?;
                child(f, r, 2)
            }
            Expr::Sub(l, r) => {
                child(f, l, 1)?;
                f.write_str(" - ")?;
                child(f, r, 2)
            }
            Expr::Mul(l, r) => {
                child(f, l, 2)?;
                f.write_str(" * ")?;
                child(f, r, 3)
            }
            Expr::Div(l, r) => {
                child(f, l, 2)?;
                f.write_str(" / ")?;
                child(f, r, 3)
            }
            Expr::Pow(b, n) => {
                child(f, b, 5)?;
                write!(f, "^{n}")
            }
            Expr::Abs(e) => write!(f, "abs({e})"),
            Expr::Min(l, r) => write!(f, "min({l}, {r})"),
            Expr::Max(l, r) => write!(f, "max({l}, {r})"),
        }
    }
}
