//! Rational functions: quotients of multivariate polynomials, kept in the
//! canonical form gcd(num, den) = 1 with monic denominator.

use std::fmt;

use num::{One, Zero};

use super::poly::{gcd, lcm, MultiPoly, VarSet};
use super::{ExprError, ExprResult, Rational};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatFn {
    num: MultiPoly,
    den: MultiPoly,
}

impl RatFn {
    /// Normalized constructor. Fails on an identically zero denominator.
    pub fn new(num: MultiPoly, den: MultiPoly) -> ExprResult<Self> {
        if den.is_zero() {
            return Err(ExprError::ZeroDenominator);
        }
        Ok(Self::normalized(num, den))
    }

    fn normalized(num: MultiPoly, den: MultiPoly) -> Self {
        if num.is_zero() {
            return RatFn {
                den: MultiPoly::one(num.vars()),
                num,
            };
        }
        let g = gcd(&num, &den);
        let mut num = num.exact_div(&g).expect("gcd divides numerator");
        let mut den = den.exact_div(&g).expect("gcd divides denominator");
        // Monic denominator pins the representative uniquely.
        let lc = den.leading_coeff();
        if !lc.is_one() {
            let inv = Rational::one() / lc;
            num = num.scale(&inv);
            den = den.scale(&inv);
        }
        RatFn { num, den }
    }

    pub fn from_poly(p: MultiPoly) -> Self {
        RatFn {
            den: MultiPoly::one(p.vars()),
            num: p,
        }
    }

    pub fn zero(vars: &VarSet) -> Self {
        Self::from_poly(MultiPoly::zero(vars))
    }

    pub fn one(vars: &VarSet) -> Self {
        Self::from_poly(MultiPoly::one(vars))
    }

    pub fn constant(vars: &VarSet, c: Rational) -> Self {
        Self::from_poly(MultiPoly::constant(vars, c))
    }

    pub fn var(vars: &VarSet, idx: usize) -> Self {
        Self::from_poly(MultiPoly::var(vars, idx))
    }

    pub fn num(&self) -> &MultiPoly {
        &self.num
    }

    pub fn den(&self) -> &MultiPoly {
        &self.den
    }

    pub fn vars(&self) -> &VarSet {
        self.num.vars()
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_polynomial(&self) -> bool {
        self.den.is_one()
    }

    pub fn as_constant(&self) -> Option<Rational> {
        if self.den.is_one() {
            self.num.as_constant()
        } else {
            None
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        // Common-denominator sum through the lcm keeps intermediates small.
        let g = gcd(&self.den, &other.den);
        let da = self.den.exact_div(&g).unwrap();
        let db = other.den.exact_div(&g).unwrap();
        let num = self.num.mul(&db).add(&other.num.mul(&da));
        let den = self.den.mul(&db);
        Self::normalized(num, den)
    }

    pub fn neg(&self) -> Self {
        RatFn {
            num: self.num.neg(),
            den: self.den.clone(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        // Cross-cancel before multiplying.
        let g1 = gcd(&self.num, &other.den);
        let g2 = gcd(&other.num, &self.den);
        let num = self
            .num
            .exact_div(&g1)
            .unwrap()
            .mul(&other.num.exact_div(&g2).unwrap());
        let den = self
            .den
            .exact_div(&g2)
            .unwrap()
            .mul(&other.den.exact_div(&g1).unwrap());
        Self::normalized(num, den)
    }

    pub fn scale(&self, c: &Rational) -> Self {
        RatFn {
            num: self.num.scale(c),
            den: self.den.clone(),
        }
    }

    pub fn inv(&self) -> ExprResult<Self> {
        if self.num.is_zero() {
            return Err(ExprError::ZeroDenominator);
        }
        Self::new(self.den.clone(), self.num.clone())
    }

    pub fn div(&self, other: &Self) -> ExprResult<Self> {
        Ok(self.mul(&other.inv()?))
    }

    pub fn pow(&self, n: i32) -> ExprResult<Self> {
        if n < 0 {
            return self.inv()?.pow(-n);
        }
        let mut acc = Self::one(self.vars());
        for _ in 0..n {
            acc = acc.mul(self);
        }
        Ok(acc)
    }

    /// Exact quotient-rule derivative, normalized.
    pub fn diff(&self, v: usize) -> Self {
        let num = self
            .num
            .diff(v)
            .mul(&self.den)
            .sub(&self.num.mul(&self.den.diff(v)));
        let den = self.den.mul(&self.den);
        Self::normalized(num, den)
    }

    /// Exact evaluation; the denominator must not vanish at the point.
    pub fn eval_q(&self, point: &[Rational]) -> ExprResult<Rational> {
        let d = self.den.eval_q(point);
        if d.is_zero() {
            return Err(ExprError::PoleAtPoint);
        }
        Ok(self.num.eval_q(point) / d)
    }

    /// Floating-point evaluation for the integrators.
    pub fn eval_f64(&self, point: &[f64]) -> f64 {
        self.num.eval_f64(point) / self.den.eval_f64(point)
    }

    /// Denominator value at a float point, used by domain guards.
    pub fn den_f64(&self, point: &[f64]) -> f64 {
        self.den.eval_f64(point)
    }

    /// Substitute variables by rational functions over a common context.
    pub fn subst(&self, images: &[RatFn]) -> ExprResult<Self> {
        let sub_poly = |p: &MultiPoly| -> Self {
            let target = images[0].vars();
            let mut acc = Self::constant(target, Rational::zero());
            for (m, c) in p.terms() {
                let mut term = Self::constant(target, c.clone());
                for (v, &e) in m.0.iter().enumerate() {
                    if e > 0 {
                        term = term.mul(&images[v].pow(e as i32).expect("positive power"));
                    }
                }
                acc = acc.add(&term);
            }
            acc
        };
        let n = sub_poly(&self.num);
        let d = sub_poly(&self.den);
        if d.is_zero() {
            return Err(ExprError::ZeroDenominator);
        }
        n.div(&d)
    }

    /// Re-express over a larger variable context (`map[i]` = new index of
    /// variable `i`).
    pub fn embed(&self, new_vars: &VarSet, map: &[usize]) -> Self {
        RatFn {
            num: self.num.embed(new_vars, map),
            den: self.den.embed(new_vars, map),
        }
    }

    /// Re-express over another context by matching variable names; every
    /// variable that actually occurs must exist in the target.
    pub fn embed_by_name(&self, new_vars: &VarSet) -> Option<Self> {
        let src = self.vars();
        let mut map = Vec::with_capacity(src.len());
        for (i, name) in src.iter().enumerate() {
            match new_vars.iter().position(|v| v == name) {
                Some(p) => map.push(p),
                None => {
                    if self.num.depends_on(i) || self.den.depends_on(i) {
                        return None;
                    }
                    map.push(0);
                }
            }
        }
        Some(self.embed(new_vars, &map))
    }

    /// Common denominator for a family: returns (numerators, denominator)
    /// with `self_i = num_i / den` exactly.
    pub fn clear_denominators(fns: &[RatFn]) -> (Vec<MultiPoly>, MultiPoly) {
        assert!(!fns.is_empty());
        let vars = fns[0].vars().clone();
        let mut common = MultiPoly::one(&vars);
        for f in fns {
            common = lcm(&common, &f.den);
        }
        let nums = fns
            .iter()
            .map(|f| {
                let factor = common.exact_div(&f.den).expect("lcm divisible");
                f.num.mul(&factor)
            })
            .collect();
        (nums, common)
    }
}

impl fmt::Display for RatFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den.is_one() {
            if self.num.num_terms() > 1 {
                write!(f, "{}", self.num)
            } else {
                write!(f, "{}", self.num)
            }
        } else {
            write!(f, "({})/({})", self.num, self.den)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::poly::varset;
    use super::super::{q, qr};
    use super::*;

    fn xyz() -> VarSet {
        varset(&["x", "y", "z"])
    }

    #[test]
    fn normalization_cancels() {
        let vs = xyz();
        let x = MultiPoly::var(&vs, 0);
        let y = MultiPoly::var(&vs, 1);
        // (x^2 - y^2)/(x - y) = x + y
        let f = RatFn::new(x.pow(2).sub(&y.pow(2)), x.sub(&y)).unwrap();
        assert_eq!(f, RatFn::from_poly(x.add(&y)));
        assert!(f.is_polynomial());
    }

    #[test]
    fn monic_denominator() {
        let vs = xyz();
        let x = MultiPoly::var(&vs, 0);
        // 1/(2x) → (1/2)/x
        let f = RatFn::new(MultiPoly::one(&vs), x.scale(&q(2))).unwrap();
        assert_eq!(f.den(), &x);
        assert_eq!(f.num().as_constant().unwrap(), qr(1, 2));
    }

    #[test]
    fn diff_power_rule() {
        let vs = xyz();
        let y = MultiPoly::var(&vs, 1);
        // d/dy 1/y^2 = -2/y^3
        let f = RatFn::new(MultiPoly::one(&vs), y.pow(2)).unwrap();
        let df = f.diff(1);
        let expect = RatFn::new(MultiPoly::constant(&vs, q(-2)), y.pow(3)).unwrap();
        assert_eq!(df, expect);
    }

    #[test]
    fn diff_after_normalization() {
        let vs = xyz();
        let x = MultiPoly::var(&vs, 0);
        let y = MultiPoly::var(&vs, 1);
        // Normalize-then-differentiate equals quotient-rule on the raw pair.
        let f = RatFn::new(x.pow(2).sub(&y.pow(2)), x.sub(&y)).unwrap();
        assert_eq!(f.diff(0), RatFn::one(&vs));
        let p = x.pow(2).sub(&y.pow(2));
        let qq = x.sub(&y);
        let raw = RatFn::new(p.diff(0).mul(&qq).sub(&p.mul(&qq.diff(0))), qq.mul(&qq)).unwrap();
        assert_eq!(raw, RatFn::one(&vs));
    }

    #[test]
    fn eval_and_pole() {
        let vs = xyz();
        let y = MultiPoly::var(&vs, 1);
        let f = RatFn::new(MultiPoly::one(&vs), y.pow(2)).unwrap();
        assert_eq!(f.eval_q(&[q(1), q(2), q(1)]).unwrap(), qr(1, 4));
        assert_eq!(f.eval_q(&[q(1), q(0), q(1)]), Err(ExprError::PoleAtPoint));
    }
}
