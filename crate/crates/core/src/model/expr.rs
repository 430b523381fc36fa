//! Scalar expression trees used as pattern-block instructions.
//!
//! An expression refers to the per-record variable slots ([`var`]) and
//! per-record parameters ([`param`]) of the data array it is applied to.
//! Operators are overloaded so instructions read like ordinary arithmetic:
//!
//! ```
//! use condensed_opf::model::expr::{param, var};
//! // c0 + c1 * p + c2 * p^2 over a record (p; c0, c1, c2)
//! let cost = param(0) + param(1) * var(0) + param(2) * var(0).powi(2);
//! assert_eq!(cost.var_slots(), 1);
//! ```

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    /// Variable slot of the record.
    Var(usize),
    /// Parameter slot of the record.
    Param(usize),
    Const(f64),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Powi(Box<Expr>, i32),
}

pub fn var(slot: usize) -> Expr {
    Expr::Var(slot)
}

pub fn param(slot: usize) -> Expr {
    Expr::Param(slot)
}

pub fn constant(value: f64) -> Expr {
    Expr::Const(value)
}

impl Expr {
    fn unary(self, op: UnaryOp) -> Expr {
        Expr::Unary(op, Box::new(self))
    }

    pub fn sin(self) -> Expr {
        self.unary(UnaryOp::Sin)
    }

    pub fn cos(self) -> Expr {
        self.unary(UnaryOp::Cos)
    }

    pub fn exp(self) -> Expr {
        self.unary(UnaryOp::Exp)
    }

    pub fn ln(self) -> Expr {
        self.unary(UnaryOp::Log)
    }

    pub fn sqrt(self) -> Expr {
        self.unary(UnaryOp::Sqrt)
    }

    pub fn powi(self, n: i32) -> Expr {
        Expr::Powi(Box::new(self), n)
    }

    pub fn powf(self, exponent: impl Into<Expr>) -> Expr {
        Expr::Binary(BinaryOp::Pow, Box::new(self), Box::new(exponent.into()))
    }

    /// Number of variable slots referenced (highest slot + 1).
    pub fn var_slots(&self) -> usize {
        self.max_slot(true)
    }

    /// Number of parameter slots referenced (highest slot + 1).
    pub fn param_slots(&self) -> usize {
        self.max_slot(false)
    }

    fn max_slot(&self, vars: bool) -> usize {
        match self {
            Expr::Var(k) if vars => k + 1,
            Expr::Param(k) if !vars => k + 1,
            Expr::Var(_) | Expr::Param(_) | Expr::Const(_) => 0,
            Expr::Unary(_, a) | Expr::Powi(a, _) => a.max_slot(vars),
            Expr::Binary(_, a, b) => a.max_slot(vars).max(b.max_slot(vars)),
        }
    }

    /// True when the expression does not depend on any variable slot.
    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Var(_) => false,
            Expr::Param(_) | Expr::Const(_) => true,
            Expr::Unary(_, a) | Expr::Powi(a, _) => a.is_constant(),
            Expr::Binary(_, a, b) => a.is_constant() && b.is_constant(),
        }
    }

    /// Direct evaluation by tree walk. Used as a reference; solvers go
    /// through the compiled tape.
    pub fn eval(&self, vars: &[f64], params: &[f64]) -> f64 {
        match self {
            Expr::Var(k) => vars[*k],
            Expr::Param(k) => params[*k],
            Expr::Const(c) => *c,
            Expr::Unary(op, a) => {
                let a = a.eval(vars, params);
                match op {
                    UnaryOp::Neg => -a,
                    UnaryOp::Sin => a.sin(),
                    UnaryOp::Cos => a.cos(),
                    UnaryOp::Exp => a.exp(),
                    UnaryOp::Log => a.ln(),
                    UnaryOp::Sqrt => a.sqrt(),
                }
            }
            Expr::Binary(op, a, b) => {
                let (a, b) = (a.eval(vars, params), b.eval(vars, params));
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => a / b,
                    BinaryOp::Pow => a.powf(b),
                }
            }
            Expr::Powi(a, n) => a.eval(vars, params).powi(*n),
        }
    }
}

impl From<f64> for Expr {
    fn from(value: f64) -> Self {
        Expr::Const(value)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Var(k) => write!(f, "x[{k}]"),
            Expr::Param(k) => write!(f, "p[{k}]"),
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Unary(UnaryOp::Neg, a) => write!(f, "-({a})"),
            Expr::Unary(op, a) => {
                let name = match op {
                    UnaryOp::Sin => "sin",
                    UnaryOp::Cos => "cos",
                    UnaryOp::Exp => "exp",
                    UnaryOp::Log => "log",
                    UnaryOp::Sqrt => "sqrt",
                    UnaryOp::Neg => unreachable!(),
                };
                write!(f, "{name}({a})")
            }
            Expr::Binary(op, a, b) => {
                let sym = match op {
                    BinaryOp::Add => "+",
                    BinaryOp::Sub => "-",
                    BinaryOp::Mul => "*",
                    BinaryOp::Div => "/",
                    BinaryOp::Pow => "^",
                };
                write!(f, "({a} {sym} {b})")
            }
            Expr::Powi(a, n) => write!(f, "({a})^{n}"),
        }
    }
}

macro_rules! binary_impl {
    ($trait:ident, $method:ident, $op:expr) => {
        impl $trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::Binary($op, Box::new(self), Box::new(rhs))
            }
        }
        impl $trait<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::Binary($op, Box::new(self), Box::new(rhs.clone()))
            }
        }
        impl $trait<Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::Binary($op, Box::new(self.clone()), Box::new(rhs))
            }
        }
        impl $trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::Binary($op, Box::new(self.clone()), Box::new(rhs.clone()))
            }
        }
        impl $trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::Binary($op, Box::new(self), Box::new(Expr::Const(rhs)))
            }
        }
        impl $trait<f64> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::Binary($op, Box::new(self.clone()), Box::new(Expr::Const(rhs)))
            }
        }
        impl $trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::Binary($op, Box::new(Expr::Const(self)), Box::new(rhs))
            }
        }
        impl $trait<&Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::Binary($op, Box::new(Expr::Const(self)), Box::new(rhs.clone()))
            }
        }
    };
}

binary_impl!(Add, add, BinaryOp::Add);
binary_impl!(Sub, sub, BinaryOp::Sub);
binary_impl!(Mul, mul, BinaryOp::Mul);
binary_impl!(Div, div, BinaryOp::Div);

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        self.unary(UnaryOp::Neg)
    }
}

impl Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        self.clone().unary(UnaryOp::Neg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slot_counts() {
        let e = param(2) * var(0) + var(3).sin();
        assert_eq!(e.var_slots(), 4);
        assert_eq!(e.param_slots(), 3);
        assert!(!e.is_constant());
        assert!((param(0) * 2.0).is_constant());
    }

    #[test]
    fn tree_eval() {
        let e = param(0) + param(1) * var(0) + param(2) * var(0).powi(2);
        assert_eq!(e.eval(&[1.0], &[1.0, 2.0, 3.0]), 6.0);
        assert_eq!(e.eval(&[0.0], &[1.0, 2.0, 3.0]), 1.0);
        let d = (var(0) / var(1)).powf(2.0) - (-var(0)).exp();
        let v = d.eval(&[1.0, 2.0], &[]);
        assert!((v - (0.25 - (-1.0f64).exp())).abs() < 1e-15);
    }
}
