//! Time-dependent coefficient expressions b_i(t): trees over `t` with
//! rational constants, arithmetic, integer powers, sin/cos/exp, and named
//! symbols bound at run time. Numeric evaluation only.

use std::collections::BTreeMap;
use std::fmt;

use super::poly::to_f64;
use super::{ExprError, ExprResult, Rational};

#[derive(Debug, Clone, PartialEq)]
pub enum TimeExpr {
    Const(Rational),
    T,
    Sym(String),
    Neg(Box<TimeExpr>),
    Add(Box<TimeExpr>, Box<TimeExpr>),
    Sub(Box<TimeExpr>, Box<TimeExpr>),
    Mul(Box<TimeExpr>, Box<TimeExpr>),
    Div(Box<TimeExpr>, Box<TimeExpr>),
    Pow(Box<TimeExpr>, i32),
    Sin(Box<TimeExpr>),
    Cos(Box<TimeExpr>),
    Exp(Box<TimeExpr>),
}

impl TimeExpr {
    pub fn zero() -> Self {
        TimeExpr::Const(Rational::from_integer(0.into()))
    }

    pub fn eval(&self, t: f64, syms: &BTreeMap<String, f64>) -> ExprResult<f64> {
        let v = self.eval_raw(t, syms)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::NonFinite)
        }
    }

    fn eval_raw(&self, t: f64, syms: &BTreeMap<String, f64>) -> ExprResult<f64> {
        Ok(match self {
            TimeExpr::Const(q) => to_f64(q),
            TimeExpr::T => t,
            TimeExpr::Sym(name) => *syms.get(name).ok_or(ExprError::UnknownVariable {
                name: name.clone(),
                pos: 0,
            })?,
            TimeExpr::Neg(e) => -e.eval_raw(t, syms)?,
            TimeExpr::Add(a, b) => a.eval_raw(t, syms)? + b.eval_raw(t, syms)?,
            TimeExpr::Sub(a, b) => a.eval_raw(t, syms)? - b.eval_raw(t, syms)?,
            TimeExpr::Mul(a, b) => a.eval_raw(t, syms)? * b.eval_raw(t, syms)?,
            TimeExpr::Div(a, b) => a.eval_raw(t, syms)? / b.eval_raw(t, syms)?,
            TimeExpr::Pow(a, e) => a.eval_raw(t, syms)?.powi(*e),
            TimeExpr::Sin(a) => a.eval_raw(t, syms)?.sin(),
            TimeExpr::Cos(a) => a.eval_raw(t, syms)?.cos(),
            TimeExpr::Exp(a) => a.eval_raw(t, syms)?.exp(),
        })
    }

    fn prec(&self) -> u8 {
        match self {
            TimeExpr::Add(..) | TimeExpr::Sub(..) => 1,
            TimeExpr::Mul(..) | TimeExpr::Div(..) => 2,
            TimeExpr::Neg(..) => 3,
            TimeExpr::Pow(..) => 4,
            _ => 5,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let p = self.prec();
        if p < min {
            write!(f, "(")?;
        }
        match self {
            TimeExpr::Const(q) => write!(f, "{q}")?,
            TimeExpr::T => write!(f, "t")?,
            TimeExpr::Sym(s) => write!(f, "{s}")?,
            TimeExpr::Neg(e) => {
                write!(f, "-")?;
                e.fmt_prec(f, 4)?;
            }
            TimeExpr::Add(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, " + ")?;
                b.fmt_prec(f, 2)?;
            }
            TimeExpr::Sub(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, " - ")?;
                b.fmt_prec(f, 2)?;
            }
            TimeExpr::Mul(a, b) => {
                a.fmt_prec(f, 2)?;
                write!(f, "*")?;
                b.fmt_prec(f, 3)?;
            }
            TimeExpr::Div(a, b) => {
                a.fmt_prec(f, 2)?;
                write!(f, "/")?;
                b.fmt_prec(f, 3)?;
            }
            TimeExpr::Pow(a, e) => {
                a.fmt_prec(f, 5)?;
                if *e < 0 {
                    write!(f, "^({e})")?;
                } else {
                    write!(f, "^{e}")?;
                }
            }
            TimeExpr::Sin(a) => write!(f, "sin({a})")?,
            TimeExpr::Cos(a) => write!(f, "cos({a})")?,
            TimeExpr::Exp(a) => write!(f, "exp({a})")?,
        }
        if p < min {
            write!(f, ")")?;
        }
        Ok(())
    }
}

impl fmt::Display for TimeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse::parse_time;
    use super::*;

    fn ev(text: &str, t: f64) -> ExprResult<f64> {
        parse_time(text).unwrap().eval(t, &BTreeMap::new())
    }

    #[test]
    fn basic_values() {
        assert_eq!(ev("sin(t)", 0.0).unwrap(), 0.0);
        assert_eq!(ev("t^2 + 1", 2.0).unwrap(), 5.0);
        assert!((ev("1 + 0.25*sin(t)", 1.0).unwrap() - (1.0 + 0.25 * 1.0f64.sin())).abs() < 1e-15);
    }

    #[test]
    fn division_by_zero_is_an_error() {
        assert_eq!(ev("1/(t-1)", 1.0), Err(ExprError::NonFinite));
    }

    #[test]
    fn symbols_bind_at_runtime() {
        let e = parse_time("a*t + 1").unwrap();
        let mut syms = BTreeMap::new();
        syms.insert("a".to_string(), 3.0);
        assert_eq!(e.eval(2.0, &syms).unwrap(), 7.0);
        assert!(e.eval(2.0, &BTreeMap::new()).is_err());
    }

    #[test]
    fn print_parse_roundtrip() {
        for text in [
            "sin(t)*cos(2*t) - 1/2",
            "exp(-t)*(t^2 + 1)",
            "1 + 0.25*sin(t)",
            "-t^3/(1 + t^2)",
        ] {
            let e = parse_time(text).unwrap();
            let round = parse_time(&e.to_string()).unwrap();
            assert_eq!(e, round, "round-trip failed for {text}");
        }
    }
}
