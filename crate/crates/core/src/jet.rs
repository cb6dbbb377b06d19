//! Second-order forward-mode differentiation in one variable.
//!
//! A [`Jet2`] carries `(f, f', f'')` of some quantity with respect to the
//! polar angle. Every elementary operation propagates the triple through the
//! chain rule truncated at order two, so a single evaluation of a potential
//! yields `V`, `V'` and `V''` without finite differencing.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JetError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("domain error in {op}: {detail}")]
    DomainError { op: &'static str, detail: String },
}

impl JetError {
    fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        JetError::DomainError {
            op,
            detail: detail.into(),
        }
    }
}

/// Value, first derivative and second derivative of a scalar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jet2 {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Cos,
    Sin,
    Tan,
    Sqrt,
    Exp,
    Log,
    Abs,
}

impl UnaryOp {
    pub const FUNCTIONS: [UnaryOp; 7] = [
        UnaryOp::Cos,
        UnaryOp::Sin,
        UnaryOp::Tan,
        UnaryOp::Sqrt,
        UnaryOp::Exp,
        UnaryOp::Log,
        UnaryOp::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Cos => "cos",
            UnaryOp::Sin => "sin",
            UnaryOp::Tan => "tan",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<UnaryOp> {
        UnaryOp::FUNCTIONS.into_iter().find(|op| op.name() == name)
    }
}

impl BinaryOp {
    pub fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
            BinaryOp::Pow => '^',
        }
    }
}

/// `tan` is rejected when `|cos u|` falls below this.
const TAN_POLE_TOL: f64 = 1e-12;

impl Jet2 {
    pub const fn new(value: f64, d1: f64, d2: f64) -> Self {
        Jet2 { value, d1, d2 }
    }

    /// Seed jet for the independent variable.
    pub const fn variable(theta: f64) -> Self {
        Jet2::new(theta, 1.0, 0.0)
    }

    pub const fn constant(c: f64) -> Self {
        Jet2::new(c, 0.0, 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.d1.is_finite() && self.d2.is_finite()
    }

    pub fn is_constant(&self) -> bool {
        self.d1 == 0.0 && self.d2 == 0.0
    }

    /// Compose with a scalar function given its value and first two
    /// derivatives at `self.value`.
    fn chain(self, f: f64, df: f64, d2f: f64) -> Jet2 {
        Jet2::new(f, df * self.d1, d2f * self.d1 * self.d1 + df * self.d2)
    }

    fn checked(self, op: &'static str) -> Result<Jet2, JetError> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(JetError::domain(op, format!("non-finite result {self}")))
        }
    }

    pub fn neg(self) -> Jet2 {
        Jet2::new(-self.value, -self.d1, -self.d2)
    }

    pub fn add(self, o: Jet2) -> Jet2 {
        Jet2::new(self.value + o.value, self.d1 + o.d1, self.d2 + o.d2)
    }

    pub fn sub(self, o: Jet2) -> Jet2 {
        Jet2::new(self.value - o.value, self.d1 - o.d1, self.d2 - o.d2)
    }

    pub fn mul(self, o: Jet2) -> Jet2 {
        Jet2::new(
            self.value * o.value,
            self.d1 * o.value + self.value * o.d1,
            self.d2 * o.value + 2.0 * self.d1 * o.d1 + self.value * o.d2,
        )
    }

    pub fn recip(self) -> Result<Jet2, JetError> {
        let u = self.value;
        if u == 0.0 {
            return Err(JetError::DivisionByZero);
        }
        let inv = 1.0 / u;
        self.chain(inv, -inv * inv, 2.0 * inv * inv * inv)
            .checked("div")
    }

    pub fn div(self, o: Jet2) -> Result<Jet2, JetError> {
        if o.value == 0.0 {
            return Err(JetError::DivisionByZero);
        }
        // q = a/b, q' = (a' - q b')/b, q'' = (a'' - 2 q' b' - q b'')/b
        let q = self.value / o.value;
        let q1 = (self.d1 - q * o.d1) / o.value;
        let q2 = (self.d2 - 2.0 * q1 * o.d1 - q * o.d2) / o.value;
        Jet2::new(q, q1, q2).checked("div")
    }

    /// `self ^ exponent` for a constant exponent.
    ///
    /// Integer exponents accept any base (negative powers reject zero);
    /// other exponents require a positive base.
    pub fn powf(self, exponent: f64) -> Result<Jet2, JetError> {
        let u = self.value;
        if !exponent.is_finite() {
            return Err(JetError::domain("pow", "non-finite exponent"));
        }
        if exponent == 0.0 {
            return Ok(Jet2::constant(1.0));
        }
        let is_int = exponent.fract() == 0.0 && exponent.abs() < 2f64.powi(31);
        if is_int {
            let n = exponent as i32;
            if u == 0.0 && n < 0 {
                return Err(JetError::DivisionByZero);
            }
            let f = u.powi(n);
            let df = if n == 1 { 1.0 } else { n as f64 * u.powi(n - 1) };
            let d2f = match n {
                1 => 0.0,
                2 => 2.0,
                _ => (n as f64) * ((n - 1) as f64) * u.powi(n - 2),
            };
            return self.chain(f, df, d2f).checked("pow");
        }
        if u <= 0.0 {
            return Err(JetError::domain(
                "pow",
                format!("base {u} must be positive for exponent {exponent}"),
            ));
        }
        let f = u.powf(exponent);
        let df = exponent * f / u;
        let d2f = exponent * (exponent - 1.0) * f / (u * u);
        self.chain(f, df, d2f).checked("pow")
    }

    pub fn sin(self) -> Jet2 {
        let (s, c) = self.value.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Jet2 {
        let (s, c) = self.value.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn tan(self) -> Result<Jet2, JetError> {
        let c = self.value.cos();
        if c.abs() < TAN_POLE_TOL {
            return Err(JetError::domain("tan", format!("pole at {}", self.value)));
        }
        let t = self.value.tan();
        let sec2 = 1.0 / (c * c);
        self.chain(t, sec2, 2.0 * sec2 * t).checked("tan")
    }

    pub fn sqrt(self) -> Result<Jet2, JetError> {
        let u = self.value;
        if u <= 0.0 {
            return Err(JetError::domain("sqrt", format!("argument {u} must be positive")));
        }
        let s = u.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * u)).checked("sqrt")
    }

    pub fn exp(self) -> Result<Jet2, JetError> {
        let e = self.value.exp();
        self.chain(e, e, e).checked("exp")
    }

    pub fn ln(self) -> Result<Jet2, JetError> {
        let u = self.value;
        if u <= 0.0 {
            return Err(JetError::domain("log", format!("argument {u} must be positive")));
        }
        self.chain(u.ln(), 1.0 / u, -1.0 / (u * u)).checked("log")
    }

    pub fn abs(self) -> Result<Jet2, JetError> {
        let u = self.value;
        if u == 0.0 {
            return Err(JetError::domain("abs", "not differentiable at 0"));
        }
        Ok(if u > 0.0 { self } else { self.neg() })
    }
}

pub fn lift_variable(theta: f64) -> Jet2 {
    Jet2::variable(theta)
}

pub fn lift_constant(c: f64) -> Jet2 {
    Jet2::constant(c)
}

/// Binary operation dispatch. `Pow` requires `b` to be a constant jet.
pub fn apply_binary(op: BinaryOp, a: Jet2, b: Jet2) -> Result<Jet2, JetError> {
    let out = match op {
        BinaryOp::Add => a.add(b),
        BinaryOp::Sub => a.sub(b),
        BinaryOp::Mul => a.mul(b),
        BinaryOp::Div => return a.div(b),
        BinaryOp::Pow => {
            if !b.is_constant() {
                return Err(JetError::domain("pow", "exponent must be constant"));
            }
            return a.powf(b.value);
        }
    };
    out.checked(match op {
        BinaryOp::Add => "add",
        BinaryOp::Sub => "sub",
        _ => "mul",
    })
}

pub fn apply_unary(op: UnaryOp, a: Jet2) -> Result<Jet2, JetError> {
    match op {
        UnaryOp::Neg => Ok(a.neg()),
        UnaryOp::Cos => a.cos().checked("cos"),
        UnaryOp::Sin => a.sin().checked("sin"),
        UnaryOp::Tan => a.tan(),
        UnaryOp::Sqrt => a.sqrt(),
        UnaryOp::Exp => a.exp(),
        UnaryOp::Log => a.ln(),
        UnaryOp::Abs => a.abs(),
    }
}

impl fmt::Display for Jet2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.value, self.d1, self.d2)
    }
}
