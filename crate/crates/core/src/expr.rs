//! Scalar expressions in one variable `t`, with symbolic differentiation.
//!
//! Grammar: numbers, `t`, `+ - * / ^`, parentheses and the unary functions
//! `exp ln log1p sqrt sin cos tanh sinh cosh`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Ln,
    Log1p,
    Sqrt,
    Sin,
    Cos,
    Tanh,
    Sinh,
    Cosh,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => Self::Exp,
            "ln" | "log" => Self::Ln,
            "log1p" => Self::Log1p,
            "sqrt" => Self::Sqrt,
            "sin" => Self::Sin,
            "cos" => Self::Cos,
            "tanh" => Self::Tanh,
            "sinh" => Self::Sinh,
            "cosh" => Self::Cosh,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Self::Exp => "exp",
            Self::Ln => "ln",
            Self::Log1p => "log1p",
            Self::Sqrt => "sqrt",
            Self::Sin => "sin",
            Self::Cos => "cos",
            Self::Tanh => "tanh",
            Self::Sinh => "sinh",
            Self::Cosh => "cosh",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Self::Exp => v.exp(),
            Self::Ln => v.ln(),
            Self::Log1p => v.ln_1p(),
            Self::Sqrt => v.sqrt(),
            Self::Sin => v.sin(),
            Self::Cos => v.cos(),
            Self::Tanh => v.tanh(),
            Self::Sinh => v.sinh(),
            Self::Cosh => v.cosh(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var,
    Add(Arc<Expr>, Arc<Expr>),
    Sub(Arc<Expr>, Arc<Expr>),
    Mul(Arc<Expr>, Arc<Expr>),
    Div(Arc<Expr>, Arc<Expr>),
    Pow(Arc<Expr>, Arc<Expr>),
    Neg(Arc<Expr>),
    Call(Func, Arc<Expr>),
}

use Expr::*;

fn c(v: f64) -> Expr {
    Const(v)
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Const(x), Const(y)) => c(x + y),
        (Const(z), _) if *z == 0.0 => b,
        (_, Const(z)) if *z == 0.0 => a,
        _ => Add(a.into(), b.into()),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Const(x), Const(y)) => c(x - y),
        (_, Const(z)) if *z == 0.0 => a,
        (Const(z), _) if *z == 0.0 => neg(b),
        _ => Sub(a.into(), b.into()),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Const(x), Const(y)) => c(x * y),
        (Const(z), _) | (_, Const(z)) if *z == 0.0 => c(0.0),
        (Const(o), _) if *o == 1.0 => b,
        (_, Const(o)) if *o == 1.0 => a,
        _ => Mul(a.into(), b.into()),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Const(z), _) if *z == 0.0 => c(0.0),
        (_, Const(o)) if *o == 1.0 => a,
        _ => Div(a.into(), b.into()),
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Const(x) => c(-x),
        Neg(inner) => (*inner).clone(),
        other => Neg(other.into()),
    }
}

fn pow(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (_, Const(o)) if *o == 1.0 => a,
        (_, Const(z)) if *z == 0.0 => c(1.0),
        _ => Pow(a.into(), b.into()),
    }
}

fn call(f: Func, a: Expr) -> Expr {
    Call(f, a.into())
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let mut p = Parser {
            chars: src.chars().collect(),
            pos: 0,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.chars.len() {
            return Err(Error::Parse(format!(
                "unexpected '{}' at offset {} in expression '{src}'",
                p.chars[p.pos], p.pos
            )));
        }
        Ok(e)
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Const(v) => *v,
            Var => t,
            Add(a, b) => a.eval(t) + b.eval(t),
            Sub(a, b) => a.eval(t) - b.eval(t),
            Mul(a, b) => a.eval(t) * b.eval(t),
            Div(a, b) => a.eval(t) / b.eval(t),
            Pow(a, b) => match **b {
                Const(e) if e.fract() == 0.0 && e.abs() < 64.0 => a.eval(t).powi(e as i32),
                _ => a.eval(t).powf(b.eval(t)),
            },
            Neg(a) => -a.eval(t),
            Call(f, a) => f.apply(a.eval(t)),
        }
    }

    pub fn derivative(&self) -> Expr {
        match self {
            Const(_) => c(0.0),
            Var => c(1.0),
            Add(a, b) => add(a.derivative(), b.derivative()),
            Sub(a, b) => sub(a.derivative(), b.derivative()),
            Mul(a, b) => add(
                mul(a.derivative(), (**b).clone()),
                mul((**a).clone(), b.derivative()),
            ),
            Div(a, b) => div(
                sub(
                    mul(a.derivative(), (**b).clone()),
                    mul((**a).clone(), b.derivative()),
                ),
                pow((**b).clone(), c(2.0)),
            ),
            Pow(a, b) => {
                if let Const(e) = **b {
                    mul(mul(c(e), pow((**a).clone(), c(e - 1.0))), a.derivative())
                } else {
                    // d(a^b) = a^b (b' ln a + b a'/a)
                    mul(
                        self.clone(),
                        add(
                            mul(b.derivative(), call(Func::Ln, (**a).clone())),
                            div(mul((**b).clone(), a.derivative()), (**a).clone()),
                        ),
                    )
                }
            }
            Neg(a) => neg(a.derivative()),
            Call(f, a) => {
                let u = (**a).clone();
                let outer = match f {
                    Func::Exp => call(Func::Exp, u),
                    Func::Ln => div(c(1.0), u),
                    Func::Log1p => div(c(1.0), add(c(1.0), u)),
                    Func::Sqrt => div(c(0.5), call(Func::Sqrt, u)),
                    Func::Sin => call(Func::Cos, u),
                    Func::Cos => neg(call(Func::Sin, u)),
                    Func::Tanh => sub(c(1.0), pow(call(Func::Tanh, u), c(2.0))),
                    Func::Sinh => call(Func::Cosh, u),
                    Func::Cosh => call(Func::Sinh, u),
                };
                mul(outer, a.derivative())
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Const(v) => write!(f, "{v}"),
            Var => write!(f, "t"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "({a} * {b})"),
            Div(a, b) => write!(f, "({a} / {b})"),
            Pow(a, b) => write!(f, "({a})^({b})"),
            Neg(a) => write!(f, "-({a})"),
            Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn err(&self, what: &str) -> Error {
        Error::Parse(format!("{what} at offset {}", self.pos))
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(op) = self.peek() {
            match op {
                '+' => {
                    self.pos += 1;
                    lhs = Add(lhs.into(), self.term()?.into());
                }
                '-' => {
                    self.pos += 1;
                    lhs = Sub(lhs.into(), self.term()?.into());
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.peek() {
            match op {
                '*' => {
                    self.pos += 1;
                    lhs = Mul(lhs.into(), self.unary()?.into());
                }
                '/' => {
                    self.pos += 1;
                    lhs = Div(lhs.into(), self.unary()?.into());
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some('-') => {
                self.pos += 1;
                Ok(Neg(self.unary()?.into()))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek() == Some('^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Pow(base.into(), exp.into()));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(ch) if ch.is_ascii_digit() || ch == '.' => {
                let start = self.pos;
                while self.pos < self.chars.len() {
                    let ch = self.chars[self.pos];
                    let exp_sign = (ch == '-' || ch == '+')
                        && matches!(self.chars.get(self.pos - 1), Some('e') | Some('E'));
                    if ch.is_ascii_digit() || ch == '.' || ch == 'e' || ch == 'E' || exp_sign {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                let text: String = self.chars[start..self.pos].iter().collect();
                text.parse::<f64>()
                    .map(Const)
                    .map_err(|_| Error::Parse(format!("bad number '{text}' at offset {start}")))
            }
            Some(ch) if ch.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.chars.len()
                    && (self.chars[self.pos].is_ascii_alphanumeric() || self.chars[self.pos] == '_')
                {
                    self.pos += 1;
                }
                let name: String = self.chars[start..self.pos].iter().collect();
                if name == "t" {
                    return Ok(Var);
                }
                if name == "pi" {
                    return Ok(Const(std::f64::consts::PI));
                }
                let func = Func::from_name(&name)
                    .ok_or_else(|| Error::Parse(format!("unknown identifier '{name}' at offset {start}")))?;
                if self.peek() != Some('(') {
                    return Err(self.err("expected '(' after function name"));
                }
                self.pos += 1;
                let arg = self.expr()?;
                if self.peek() != Some(')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(Call(func, arg.into()))
            }
            Some(ch) => Err(self.err(&format!("unexpected '{ch}'"))),
            None => Err(self.err("unexpected end of expression")),
        }
    }
}
