//! Exact arithmetic: rationals, multivariate polynomials, rational functions,
//! partial differentiation, and the text expression grammar used by scenario
//! files and CLI flags.
//!
//! Everything here is immutable and pure. Coordinate dependence is rational;
//! time dependence lives in [`TimeExpr`] and is evaluated numerically only.

mod parse;
mod poly;
mod ratfunc;
mod time;

pub use parse::{parse_poly, parse_rf, parse_time};
pub use poly::{varset, Monomial, MultiPoly, VarSet};
pub use ratfunc::RatFn;
pub use time::TimeExpr;

use num::BigInt;

/// Arbitrary-precision rational, the coefficient field of every exact
/// computation. `num::BigRational` maintains the invariants we need:
/// reduced fraction, positive denominator.
pub type Rational = num::BigRational;

/// Rational from an integer.
pub fn q(n: i64) -> Rational {
    Rational::from(BigInt::from(n))
}

/// Rational from numerator and denominator.
pub fn qr(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Errors produced by expression parsing and evaluation.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExprError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown variable `{name}` at position {pos}")]
    UnknownVariable { name: String, pos: usize },
    #[error("division by an identically zero expression")]
    ZeroDenominator,
    #[error("denominator vanishes at the evaluation point")]
    PoleAtPoint,
    #[error("evaluation produced a non-finite value")]
    NonFinite,
    #[error("variable mismatch: expected context {expected:?}, got {got:?}")]
    VarMismatch { expected: Vec<String>, got: Vec<String> },
}

pub type ExprResult<T> = Result<T, ExprError>;
