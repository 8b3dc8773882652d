//! Small symbolic expression language.
//!
//! Scenes supply every scalar degree of freedom (profiles, potentials,
//! scaling functions) as an infix string.  This module parses those strings
//! into an AST, evaluates the AST against variable bindings, and
//! differentiates it symbolically.  Derivatives are taken exactly; no
//! rewriting is performed beyond folding subtrees whose operands are
//! literal constants, so a derivative prints the way the chain rule built
//! it.  That keeps differentiation trivially auditable, at the cost of
//! larger ASTs; everything downstream evaluates at desk scale where that
//! does not matter.
//!
//! Precedence, tightest first: function call, `^` (right-associative),
//! unary minus, `*` `/`, `+` `-`.  So `-k1^2` is `-(k1^2)`.
//! `pi` and `e` are predefined identifiers that parse as literals.

mod parser;

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Tan,
    Sinh,
    Cosh,
    Tanh,
    Exp,
    Log,
    Sqrt,
    Atan,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tan => "tan",
            UnaryOp::Sinh => "sinh",
            UnaryOp::Cosh => "cosh",
            UnaryOp::Tanh => "tanh",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Atan => "atan",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Atan2,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    /// Parse infix source.  Errors carry the byte offset of the failure.
    pub fn parse(src: &str) -> Result<Expr> {
        parser::parse(src)
    }

    pub fn constant(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    // Smart constructors.  They fold operations on literal constants (and
    // the literal-zero/one identities that differentiation mass-produces)
    // and build a plain node otherwise.  Folding only ever inspects
    // literal operands, so no analytic rewriting can hide a bug.

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Const(x), Expr::Const(y)) if (x + y).is_finite() => Expr::Const(x + y),
            (Expr::Const(x), b) if x == 0.0 => b,
            (a, Expr::Const(y)) if y == 0.0 => a,
            (a, b) => Expr::Binary(BinaryOp::Add, Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Const(x), Expr::Const(y)) if (x - y).is_finite() => Expr::Const(x - y),
            (a, Expr::Const(y)) if y == 0.0 => a,
            (Expr::Const(x), b) if x == 0.0 => Expr::neg(b),
            (a, b) => Expr::Binary(BinaryOp::Sub, Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Const(x), Expr::Const(y)) if (x * y).is_finite() => Expr::Const(x * y),
            (Expr::Const(x), _) | (_, Expr::Const(x)) if x == 0.0 => Expr::Const(0.0),
            (Expr::Const(x), b) if x == 1.0 => b,
            (a, Expr::Const(y)) if y == 1.0 => a,
            (a, b) => Expr::Binary(BinaryOp::Mul, Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Const(x), Expr::Const(y)) if y != 0.0 && (x / y).is_finite() => {
                Expr::Const(x / y)
            }
            (Expr::Const(x), _) if x == 0.0 => Expr::Const(0.0),
            (a, Expr::Const(y)) if y == 1.0 => a,
            (a, b) => Expr::Binary(BinaryOp::Div, Box::new(a), Box::new(b)),
        }
    }

    pub fn pow(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (a, Expr::Const(y)) if y == 1.0 => a,
            (_, Expr::Const(y)) if y == 0.0 => Expr::Const(1.0),
            (Expr::Const(x), Expr::Const(y)) if pow_value(x, y).is_ok() => {
                Expr::Const(pow_value(x, y).unwrap())
            }
            (a, b) => Expr::Binary(BinaryOp::Pow, Box::new(a), Box::new(b)),
        }
    }

    pub fn atan2(y: Expr, x: Expr) -> Expr {
        match (y, x) {
            (Expr::Const(a), Expr::Const(b)) => Expr::Const(a.atan2(b)),
            (y, x) => Expr::Binary(BinaryOp::Atan2, Box::new(y), Box::new(x)),
        }
    }

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Const(x) => Expr::Const(-x),
            a => Expr::Unary(UnaryOp::Neg, Box::new(a)),
        }
    }

    pub fn unary(op: UnaryOp, a: Expr) -> Expr {
        if op == UnaryOp::Neg {
            return Expr::neg(a);
        }
        if let Expr::Const(x) = &a {
            if let Ok(v) = unary_value(op, *x, &a) {
                if v.is_finite() {
                    return Expr::Const(v);
                }
            }
        }
        Expr::Unary(op, Box::new(a))
    }

    /// The set of variable names appearing in the expression.
    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_variables(&mut out);
        out
    }

    fn collect_variables(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(name) => {
                out.insert(name.clone());
            }
            Expr::Unary(_, a) => a.collect_variables(out),
            Expr::Binary(_, a, b) => {
                a.collect_variables(out);
                b.collect_variables(out);
            }
        }
    }

    /// Reject the expression unless it uses only `allowed` variables.
    pub fn check_variables(&self, allowed: &[&str]) -> Result<()> {
        for v in self.variables() {
            if !allowed.contains(&v.as_str()) {
                return Err(Error::WrongVariables {
                    expr: self.to_string(),
                    allowed: allowed.join(", "),
                    found: v,
                });
            }
        }
        Ok(())
    }

    /// Evaluate with the given variable bindings.
    pub fn eval(&self, vars: &[(&str, f64)]) -> Result<f64> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var(name) => vars
                .iter()
                .find(|(n, _)| *n == name.as_str())
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::UnboundVariable { name: name.clone() })?,
            Expr::Unary(op, a) => unary_value(*op, a.eval(vars)?, self)?,
            Expr::Binary(op, a, b) => {
                let x = a.eval(vars)?;
                let y = b.eval(vars)?;
                binary_value(*op, x, y, self)?
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(domain(self, "result is not finite"))
        }
    }

    /// Exact partial derivative with respect to `var`.  The result is a
    /// fresh AST; apart from constant folding it is exactly what the
    /// textbook rules produce.
    pub fn differentiate(&self, var: &str) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(name) => {
                if name == var {
                    Expr::Const(1.0)
                } else {
                    Expr::Const(0.0)
                }
            }
            Expr::Unary(op, a) => {
                let da = a.differentiate(var);
                let a = a.as_ref().clone();
                match op {
                    UnaryOp::Neg => Expr::neg(da),
                    UnaryOp::Sin => Expr::mul(Expr::unary(UnaryOp::Cos, a), da),
                    UnaryOp::Cos => Expr::neg(Expr::mul(Expr::unary(UnaryOp::Sin, a), da)),
                    UnaryOp::Tan => Expr::div(
                        da,
                        Expr::pow(Expr::unary(UnaryOp::Cos, a), Expr::Const(2.0)),
                    ),
                    UnaryOp::Sinh => Expr::mul(Expr::unary(UnaryOp::Cosh, a), da),
                    UnaryOp::Cosh => Expr::mul(Expr::unary(UnaryOp::Sinh, a), da),
                    UnaryOp::Tanh => Expr::div(
                        da,
                        Expr::pow(Expr::unary(UnaryOp::Cosh, a), Expr::Const(2.0)),
                    ),
                    UnaryOp::Exp => Expr::mul(Expr::unary(UnaryOp::Exp, a), da),
                    UnaryOp::Log => Expr::div(da, a),
                    UnaryOp::Sqrt => Expr::div(
                        da,
                        Expr::mul(Expr::Const(2.0), Expr::unary(UnaryOp::Sqrt, a)),
                    ),
                    UnaryOp::Atan => Expr::div(
                        da,
                        Expr::add(Expr::Const(1.0), Expr::pow(a, Expr::Const(2.0))),
                    ),
                }
            }
            Expr::Binary(op, a, b) => {
                let da = a.differentiate(var);
                let db = b.differentiate(var);
                let (a, b) = (a.as_ref().clone(), b.as_ref().clone());
                match op {
                    BinaryOp::Add => Expr::add(da, db),
                    BinaryOp::Sub => Expr::sub(da, db),
                    BinaryOp::Mul => {
                        Expr::add(Expr::mul(da, b.clone()), Expr::mul(a, db))
                    }
                    BinaryOp::Div => Expr::div(
                        Expr::sub(Expr::mul(da, b.clone()), Expr::mul(a, db)),
                        Expr::pow(b, Expr::Const(2.0)),
                    ),
                    BinaryOp::Pow => {
                        if let Expr::Const(c) = b {
                            // Power rule for a literal exponent; valid for
                            // negative bases at integer powers, which the
                            // general exp/log route is not.
                            Expr::mul(
                                Expr::mul(
                                    Expr::Const(c),
                                    Expr::pow(a, Expr::Const(c - 1.0)),
                                ),
                                da,
                            )
                        } else {
                            // a^b = exp(b log a), so
                            // (a^b)' = a^b (b' log a + b a'/a); needs a > 0
                            // at evaluation time.
                            Expr::mul(
                                Expr::pow(a.clone(), b.clone()),
                                Expr::add(
                                    Expr::mul(db, Expr::unary(UnaryOp::Log, a.clone())),
                                    Expr::mul(b, Expr::div(da, a)),
                                ),
                            )
                        }
                    }
                    BinaryOp::Atan2 => {
                        // d/dt atan2(y, x) = (y' x - x' y) / (x^2 + y^2)
                        let num = Expr::sub(
                            Expr::mul(da, b.clone()),
                            Expr::mul(db, a.clone()),
                        );
                        let den = Expr::add(
                            Expr::pow(b, Expr::Const(2.0)),
                            Expr::pow(a, Expr::Const(2.0)),
                        );
                        Expr::div(num, den)
                    }
                }
            }
        }
    }
}

/// An expression of one variable bundled with its first two derivative
/// ASTs, differentiated once at construction so evaluation is allocation
/// free.
#[derive(Clone, Debug)]
pub struct Univariate {
    var: &'static str,
    f: Expr,
    d: Expr,
    dd: Expr,
}

impl Univariate {
    /// `var` names the single variable `f` may depend on.
    pub fn new(f: Expr, var: &'static str) -> Result<Self> {
        f.check_variables(&[var])?;
        let d = f.differentiate(var);
        let dd = d.differentiate(var);
        Ok(Univariate { var, f, d, dd })
    }

    pub fn expr(&self) -> &Expr {
        &self.f
    }

    pub fn value(&self, x: f64) -> Result<f64> {
        self.f.eval(&[(self.var, x)])
    }

    /// (f, f', f'') at `x`.
    pub fn jet(&self, x: f64) -> Result<[f64; 3]> {
        let at = [(self.var, x)];
        Ok([self.f.eval(&at)?, self.d.eval(&at)?, self.dd.eval(&at)?])
    }
}

/// An expression of two variables with all partials through second order.
#[derive(Clone, Debug)]
pub struct Bivariate {
    vars: [&'static str; 2],
    f: Expr,
    d: [Expr; 2],
    dd: [[Expr; 2]; 2],
}

impl Bivariate {
    pub fn new(f: Expr, vars: [&'static str; 2]) -> Result<Self> {
        f.check_variables(&vars)?;
        let d = [f.differentiate(vars[0]), f.differentiate(vars[1])];
        let dd = [
            [d[0].differentiate(vars[0]), d[0].differentiate(vars[1])],
            [d[1].differentiate(vars[0]), d[1].differentiate(vars[1])],
        ];
        Ok(Bivariate { vars, f, d, dd })
    }

    pub fn expr(&self) -> &Expr {
        &self.f
    }

    pub fn value(&self, x: [f64; 2]) -> Result<f64> {
        self.f.eval(&[(self.vars[0], x[0]), (self.vars[1], x[1])])
    }

    /// (f, [f_0, f_1], [[f_00, f_01], [f_10, f_11]]) at `x`.
    #[allow(clippy::type_complexity)]
    pub fn jet(&self, x: [f64; 2]) -> Result<(f64, [f64; 2], [[f64; 2]; 2])> {
        let at = [(self.vars[0], x[0]), (self.vars[1], x[1])];
        let v = self.f.eval(&at)?;
        let d = [self.d[0].eval(&at)?, self.d[1].eval(&at)?];
        let d01 = self.dd[0][1].eval(&at)?;
        let dd = [
            [self.dd[0][0].eval(&at)?, d01],
            [d01, self.dd[1][1].eval(&at)?],
        ];
        Ok((v, d, dd))
    }
}

/// An expression of three variables with precomputed symbolic partials
/// through second order.
#[derive(Clone, Debug)]
pub struct Trivariate {
    vars: [&'static str; 3],
    f: Expr,
    d: [Expr; 3],
    dd: [[Expr; 3]; 3],
}

impl Trivariate {
    pub fn new(f: Expr, vars: [&'static str; 3]) -> Result<Self> {
        f.check_variables(&vars)?;
        let d = [
            f.differentiate(vars[0]),
            f.differentiate(vars[1]),
            f.differentiate(vars[2]),
        ];
        let dd = [0, 1, 2].map(|i| [0, 1, 2].map(|j| d[i].differentiate(vars[j])));
        Ok(Trivariate { vars, f, d, dd })
    }

    pub fn expr(&self) -> &Expr {
        &self.f
    }

    /// (f, grad f, hess f) at `x`, with the Hessian mirrored from its
    /// upper triangle.
    #[allow(clippy::type_complexity)]
    pub fn jet(&self, x: [f64; 3]) -> Result<(f64, [f64; 3], [[f64; 3]; 3])> {
        let at = [
            (self.vars[0], x[0]),
            (self.vars[1], x[1]),
            (self.vars[2], x[2]),
        ];
        let v = self.f.eval(&at)?;
        let d = [
            self.d[0].eval(&at)?,
            self.d[1].eval(&at)?,
            self.d[2].eval(&at)?,
        ];
        let mut dd = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in i..3 {
                let m = self.dd[i][j].eval(&at)?;
                dd[i][j] = m;
                dd[j][i] = m;
            }
        }
        Ok((v, d, dd))
    }
}

fn domain(e: &Expr, msg: impl Into<String>) -> Error {
    Error::EvalDomain {
        expr: e.to_string(),
        msg: msg.into(),
    }
}

fn unary_value(op: UnaryOp, x: f64, node: &Expr) -> Result<f64> {
    Ok(match op {
        UnaryOp::Neg => -x,
        UnaryOp::Sin => x.sin(),
        UnaryOp::Cos => x.cos(),
        UnaryOp::Tan => x.tan(),
        UnaryOp::Sinh => x.sinh(),
        UnaryOp::Cosh => x.cosh(),
        UnaryOp::Tanh => x.tanh(),
        UnaryOp::Exp => x.exp(),
        UnaryOp::Log => {
            if x <= 0.0 {
                return Err(domain(node, format!("log of non-positive value {x}")));
            }
            x.ln()
        }
        UnaryOp::Sqrt => {
            if x < 0.0 {
                return Err(domain(node, format!("square root of negative value {x}")));
            }
            x.sqrt()
        }
        UnaryOp::Atan => x.atan(),
    })
}

fn pow_value(base: f64, exp: f64) -> std::result::Result<f64, &'static str> {
    if base == 0.0 && exp < 0.0 {
        return Err("zero raised to a negative power");
    }
    if base < 0.0 && exp.fract() != 0.0 {
        return Err("negative base raised to a non-integer power");
    }
    let v = base.powf(exp);
    if v.is_finite() {
        Ok(v)
    } else {
        Err("result is not finite")
    }
}

fn binary_value(op: BinaryOp, x: f64, y: f64, node: &Expr) -> Result<f64> {
    Ok(match op {
        BinaryOp::Add => x + y,
        BinaryOp::Sub => x - y,
        BinaryOp::Mul => x * y,
        BinaryOp::Div => {
            if y == 0.0 {
                return Err(domain(node, "division by zero"));
            }
            x / y
        }
        BinaryOp::Pow => pow_value(x, y).map_err(|msg| domain(node, msg))?,
        BinaryOp::Atan2 => x.atan2(y),
    })
}

// Printing.  Numeric precedence levels drive parenthesisation; the output
// re-parses to a value-equal expression.
fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Const(c) if *c < 0.0 => 3,
        Expr::Const(_) | Expr::Var(_) => 5,
        Expr::Unary(UnaryOp::Neg, _) => 3,
        Expr::Unary(..) => 5,
        Expr::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => 1,
        Expr::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => 2,
        Expr::Binary(BinaryOp::Pow, ..) => 4,
        Expr::Binary(BinaryOp::Atan2, ..) => 5,
    }
}

fn fmt_at(e: &Expr, min: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let wrap = prec(e) < min;
    if wrap {
        write!(f, "(")?;
    }
    match e {
        Expr::Const(c) => write!(f, "{c}")?,
        Expr::Var(name) => write!(f, "{name}")?,
        Expr::Unary(UnaryOp::Neg, a) => {
            write!(f, "-")?;
            fmt_at(a, 3, f)?;
        }
        Expr::Unary(op, a) => {
            write!(f, "{}(", op.name())?;
            fmt_at(a, 0, f)?;
            write!(f, ")")?;
        }
        Expr::Binary(op, a, b) => match op {
            BinaryOp::Add => {
                fmt_at(a, 1, f)?;
                write!(f, "+")?;
                fmt_at(b, 2, f)?;
            }
            BinaryOp::Sub => {
                fmt_at(a, 1, f)?;
                write!(f, "-")?;
                fmt_at(b, 2, f)?;
            }
            BinaryOp::Mul => {
                fmt_at(a, 2, f)?;
                write!(f, "*")?;
                fmt_at(b, 3, f)?;
            }
            BinaryOp::Div => {
                fmt_at(a, 2, f)?;
                write!(f, "/")?;
                fmt_at(b, 3, f)?;
            }
            BinaryOp::Pow => {
                fmt_at(a, 5, f)?;
                write!(f, "^")?;
                fmt_at(b, 3, f)?;
            }
            BinaryOp::Atan2 => {
                write!(f, "atan2(")?;
                fmt_at(a, 0, f)?;
                write!(f, ",")?;
                fmt_at(b, 0, f)?;
                write!(f, ")")?;
            }
        },
    }
    if wrap {
        write!(f, ")")?;
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_at(self, 0, f)
    }
}
