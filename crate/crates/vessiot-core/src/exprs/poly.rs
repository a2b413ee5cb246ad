//! Multivariate polynomials over ℚ with a fixed, shared variable context and
//! graded-lexicographic term order. No zero coefficients are ever stored, so
//! equality is structural.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num::{One, Signed, Zero};

use super::Rational;

/// Ordered list of variable names shared by all polynomials on a chart.
pub type VarSet = Arc<Vec<String>>;

/// Build a variable context from names.
pub fn varset<S: AsRef<str>>(names: &[S]) -> VarSet {
    Arc::new(names.iter().map(|s| s.as_ref().to_string()).collect())
}

/// Exponent vector; length equals the number of variables of its context.
/// Ordered graded-lexicographically: total degree first, then lex.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial(pub Vec<u32>);

impl Monomial {
    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }

    fn divides(&self, other: &Monomial) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    fn quotient(&self, other: &Monomial) -> Monomial {
        Monomial(other.0.iter().zip(&self.0).map(|(b, a)| b - a).collect())
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        match self.total_degree().cmp(&other.total_degree()) {
            Ordering::Equal => self.0.cmp(&other.0),
            ord => ord,
        }
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Multivariate polynomial with exact rational coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiPoly {
    vars: VarSet,
    terms: BTreeMap<Monomial, Rational>,
}

impl MultiPoly {
    pub fn zero(vars: &VarSet) -> Self {
        MultiPoly {
            vars: vars.clone(),
            terms: BTreeMap::new(),
        }
    }

    pub fn one(vars: &VarSet) -> Self {
        Self::constant(vars, Rational::one())
    }

    pub fn constant(vars: &VarSet, c: Rational) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(Monomial(vec![0; vars.len()]), c);
        }
        MultiPoly {
            vars: vars.clone(),
            terms,
        }
    }

    pub fn var(vars: &VarSet, idx: usize) -> Self {
        assert!(idx < vars.len(), "variable index out of range");
        let mut exps = vec![0; vars.len()];
        exps[idx] = 1;
        Self::from_term(vars, Monomial(exps), Rational::one())
    }

    pub fn from_term(vars: &VarSet, m: Monomial, c: Rational) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(m, c);
        }
        MultiPoly {
            vars: vars.clone(),
            terms,
        }
    }

    pub fn vars(&self) -> &VarSet {
        &self.vars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rational)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
            || (self.terms.len() == 1 && self.terms.keys().next().unwrap().total_degree() == 0)
    }

    pub fn as_constant(&self) -> Option<Rational> {
        if self.is_zero() {
            Some(Rational::zero())
        } else if self.is_constant() {
            self.terms.values().next().cloned()
        } else {
            None
        }
    }

    pub fn is_one(&self) -> bool {
        self.as_constant().map(|c| c.is_one()).unwrap_or(false)
    }

    pub fn total_degree(&self) -> u32 {
        self.terms
            .keys()
            .map(Monomial::total_degree)
            .max()
            .unwrap_or(0)
    }

    /// Leading (graded-lex greatest) term.
    pub fn leading(&self) -> Option<(&Monomial, &Rational)> {
        self.terms.iter().next_back()
    }

    pub fn leading_coeff(&self) -> Rational {
        self.leading()
            .map(|(_, c)| c.clone())
            .unwrap_or_else(Rational::zero)
    }

    /// Degree in a single variable.
    pub fn degree_in(&self, v: usize) -> u32 {
        self.terms.keys().map(|m| m.0[v]).max().unwrap_or(0)
    }

    pub fn depends_on(&self, v: usize) -> bool {
        self.terms.keys().any(|m| m.0[v] > 0)
    }

    fn assert_same_vars(&self, other: &Self) {
        assert!(
            Arc::ptr_eq(&self.vars, &other.vars) || *self.vars == *other.vars,
            "polynomial variable contexts differ: {:?} vs {:?}",
            self.vars,
            other.vars
        );
    }

    fn insert_term(terms: &mut BTreeMap<Monomial, Rational>, m: Monomial, c: Rational) {
        if c.is_zero() {
            return;
        }
        match terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let sum = e.get().clone() + c;
                if sum.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = sum;
                }
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.assert_same_vars(other);
        let mut terms = self.terms.clone();
        for (m, c) in &other.terms {
            Self::insert_term(&mut terms, m.clone(), c.clone());
        }
        MultiPoly {
            vars: self.vars.clone(),
            terms,
        }
    }

    pub fn neg(&self) -> Self {
        MultiPoly {
            vars: self.vars.clone(),
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.clone(), -c.clone()))
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.assert_same_vars(other);
        let mut terms = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                Self::insert_term(&mut terms, ma.mul(mb), ca * cb);
            }
        }
        MultiPoly {
            vars: self.vars.clone(),
            terms,
        }
    }

    pub fn scale(&self, c: &Rational) -> Self {
        if c.is_zero() {
            return Self::zero(&self.vars);
        }
        MultiPoly {
            vars: self.vars.clone(),
            terms: self
                .terms
                .iter()
                .map(|(m, k)| (m.clone(), k * c))
                .collect(),
        }
    }

    pub fn pow(&self, n: u32) -> Self {
        let mut acc = Self::one(&self.vars);
        for _ in 0..n {
            acc = acc.mul(self);
        }
        acc
    }

    /// Exact partial derivative.
    pub fn diff(&self, v: usize) -> Self {
        let mut terms = BTreeMap::new();
        for (m, c) in &self.terms {
            let e = m.0[v];
            if e > 0 {
                let mut exps = m.0.clone();
                exps[v] = e - 1;
                let factor = Rational::from_integer(num::BigInt::from(e));
                Self::insert_term(&mut terms, Monomial(exps), c * factor);
            }
        }
        MultiPoly {
            vars: self.vars.clone(),
            terms,
        }
    }

    /// Exact evaluation at a rational point.
    pub fn eval_q(&self, point: &[Rational]) -> Rational {
        assert_eq!(point.len(), self.vars.len());
        let mut acc = Rational::zero();
        for (m, c) in &self.terms {
            let mut term = c.clone();
            for (v, &e) in m.0.iter().enumerate() {
                for _ in 0..e {
                    term *= &point[v];
                }
            }
            acc += term;
        }
        acc
    }

    /// Floating-point evaluation, used only by the numeric integrators.
    pub fn eval_f64(&self, point: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (m, c) in &self.terms {
            let mut term = rat_to_f64(c);
            for (v, &e) in m.0.iter().enumerate() {
                term *= point[v].powi(e as i32);
            }
            acc += term;
        }
        acc
    }

    /// Substitute every variable by a polynomial over a common target context.
    pub fn subst(&self, images: &[MultiPoly]) -> MultiPoly {
        assert_eq!(images.len(), self.vars.len());
        let target = images
            .first()
            .map(|p| p.vars.clone())
            .expect("substitution needs at least one variable");
        let mut acc = MultiPoly::zero(&target);
        for (m, c) in &self.terms {
            let mut term = MultiPoly::constant(&target, c.clone());
            for (v, &e) in m.0.iter().enumerate() {
                if e > 0 {
                    term = term.mul(&images[v].pow(e));
                }
            }
            acc = acc.add(&term);
        }
        acc
    }

    /// Re-express over a larger (or reordered) variable context; `map[i]` is
    /// the index of variable `i` in the new context.
    pub fn embed(&self, new_vars: &VarSet, map: &[usize]) -> MultiPoly {
        let mut terms = BTreeMap::new();
        for (m, c) in &self.terms {
            let mut exps = vec![0u32; new_vars.len()];
            for (v, &e) in m.0.iter().enumerate() {
                exps[map[v]] += e;
            }
            Self::insert_term(&mut terms, Monomial(exps), c.clone());
        }
        MultiPoly {
            vars: new_vars.clone(),
            terms,
        }
    }

    /// Exact division; `None` when `d` does not divide `self`.
    pub fn exact_div(&self, d: &Self) -> Option<Self> {
        self.assert_same_vars(d);
        if d.is_zero() {
            return None;
        }
        let mut rem = self.clone();
        let mut quo = MultiPoly::zero(&self.vars);
        let (dm, dc) = {
            let (m, c) = d.leading().unwrap();
            (m.clone(), c.clone())
        };
        while !rem.is_zero() {
            let (rm, rc) = {
                let (m, c) = rem.leading().unwrap();
                (m.clone(), c.clone())
            };
            if !dm.divides(&rm) {
                return None;
            }
            let qm = dm.quotient(&rm);
            let qc = rc / &dc;
            let qterm = MultiPoly::from_term(&self.vars, qm, qc);
            rem = rem.sub(&qterm.mul(d));
            quo = quo.add(&qterm);
        }
        Some(quo)
    }

    /// Make the leading coefficient 1.
    pub fn monic(&self) -> Self {
        match self.leading() {
            None => self.clone(),
            Some((_, c)) => {
                let inv = Rational::one() / c.clone();
                self.scale(&inv)
            }
        }
    }

    /// Coefficients of `self` viewed as a univariate polynomial in variable
    /// `v`; entry `k` does not depend on `v`.
    fn univariate_in(&self, v: usize) -> Vec<MultiPoly> {
        let d = self.degree_in(v) as usize;
        let mut coeffs = vec![MultiPoly::zero(&self.vars); d + 1];
        for (m, c) in &self.terms {
            let e = m.0[v] as usize;
            let mut exps = m.0.clone();
            exps[v] = 0;
            Self::insert_term(&mut coeffs[e].terms, Monomial(exps), c.clone());
        }
        coeffs
    }

    /// Content with respect to variable `v`: gcd of the `v`-coefficients.
    fn content_in(&self, v: usize) -> MultiPoly {
        let mut g = MultiPoly::zero(&self.vars);
        for c in self.univariate_in(v) {
            if !c.is_zero() {
                g = gcd(&g, &c);
            }
        }
        g
    }

    /// Pseudo-remainder of `self` by `d` in variable `v`.
    fn pseudo_rem(&self, d: &Self, v: usize) -> MultiPoly {
        let dd = d.degree_in(v);
        let lead_d = {
            let coeffs = d.univariate_in(v);
            coeffs[dd as usize].clone()
        };
        let mut r = self.clone();
        while !r.is_zero() && r.degree_in(v) >= dd {
            let rd = r.degree_in(v);
            let lead_r = r.univariate_in(v)[rd as usize].clone();
            let mut exps = vec![0u32; self.vars.len()];
            exps[v] = rd - dd;
            let shift = MultiPoly::from_term(&self.vars, Monomial(exps), Rational::one());
            r = r.mul(&lead_d).sub(&lead_r.mul(&shift).mul(d));
        }
        r
    }
}

fn rat_to_f64(q: &Rational) -> f64 {
    use num::ToPrimitive;
    q.to_f64().unwrap_or_else(|| {
        // Fall back to a quotient of rounded parts for extreme magnitudes.
        let n = q.numer().to_f64().unwrap_or(f64::NAN);
        let d = q.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

/// Rational to f64, public for the numeric layer.
pub(crate) fn to_f64(q: &Rational) -> f64 {
    rat_to_f64(q)
}

/// Monic gcd via recursive content/primitive-part reduction (primitive PRS).
pub fn gcd(a: &MultiPoly, b: &MultiPoly) -> MultiPoly {
    if a.is_zero() {
        return b.monic();
    }
    if b.is_zero() {
        return a.monic();
    }
    if a.is_constant() || b.is_constant() {
        return MultiPoly::one(a.vars());
    }
    // Main variable: highest index occurring in either operand.
    let nv = a.vars().len();
    let v = (0..nv)
        .rev()
        .find(|&v| a.depends_on(v) || b.depends_on(v))
        .expect("nonconstant polynomial must depend on a variable");
    if !a.depends_on(v) {
        return gcd(a, &b.content_in(v));
    }
    if !b.depends_on(v) {
        return gcd(&a.content_in(v), b);
    }
    let ca = a.content_in(v);
    let cb = b.content_in(v);
    let cg = gcd(&ca, &cb);
    let mut p = a.exact_div(&ca).expect("content divides");
    let mut q = b.exact_div(&cb).expect("content divides");
    if p.degree_in(v) < q.degree_in(v) {
        std::mem::swap(&mut p, &mut q);
    }
    loop {
        let r = p.pseudo_rem(&q, v);
        if r.is_zero() {
            let qc = q.content_in(v);
            let qp = q.exact_div(&qc).expect("content divides");
            return cg.mul(&qp).monic();
        }
        if !r.depends_on(v) {
            return cg.monic();
        }
        let rc = r.content_in(v);
        p = q;
        q = r.exact_div(&rc).expect("content divides");
    }
}

/// Monic least common multiple.
pub fn lcm(a: &MultiPoly, b: &MultiPoly) -> MultiPoly {
    if a.is_zero() || b.is_zero() {
        return MultiPoly::zero(a.vars());
    }
    let g = gcd(a, b);
    a.exact_div(&g).expect("gcd divides").mul(b).monic()
}

impl fmt::Display for MultiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        // Descending graded-lex, matching the canonical term order.
        for (m, c) in self.terms.iter().rev() {
            let neg = c.is_negative();
            let abs = c.abs();
            if first {
                if neg {
                    write!(f, "-")?;
                }
                first = false;
            } else if neg {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let mut factors: Vec<String> = Vec::new();
            if !abs.is_one() || m.total_degree() == 0 {
                factors.push(abs.to_string());
            }
            for (v, &e) in m.0.iter().enumerate() {
                if e == 1 {
                    factors.push(self.vars[v].clone());
                } else if e > 1 {
                    factors.push(format!("{}^{}", self.vars[v], e));
                }
            }
            write!(f, "{}", factors.join("*"))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::{q, qr};
    use super::*;

    fn xyz() -> VarSet {
        varset(&["x", "y", "z"])
    }

    #[test]
    fn graded_lex_order() {
        // x^2 > xy > y^2 > x > y > 1 on (x, y)
        let m = |a: u32, b: u32| Monomial(vec![a, b]);
        assert!(m(2, 0) > m(1, 1));
        assert!(m(1, 1) > m(0, 2));
        assert!(m(0, 2) > m(1, 0));
        assert!(m(1, 0) > m(0, 1));
        assert!(m(0, 1) > m(0, 0));
    }

    #[test]
    fn arithmetic_and_diff() {
        let vs = xyz();
        let x = MultiPoly::var(&vs, 0);
        let y = MultiPoly::var(&vs, 1);
        let p = x.mul(&y); // xy
        assert_eq!(p.diff(0), y);
        assert_eq!(p.diff(1), x);
        let s = x.add(&y).pow(2);
        let expanded = x.pow(2).add(&x.mul(&y).scale(&q(2))).add(&y.pow(2));
        assert_eq!(s, expanded);
    }

    #[test]
    fn exact_division_and_gcd() {
        let vs = xyz();
        let x = MultiPoly::var(&vs, 0);
        let y = MultiPoly::var(&vs, 1);
        let num = x.pow(2).sub(&y.pow(2));
        let den = x.sub(&y);
        let quo = num.exact_div(&den).unwrap();
        assert_eq!(quo, x.add(&y));
        assert_eq!(gcd(&num, &den), den.monic());
        // Non-divisible case
        assert!(x.exact_div(&y).is_none());
    }

    #[test]
    fn gcd_with_content() {
        let vs = xyz();
        let x = MultiPoly::var(&vs, 0);
        let y = MultiPoly::var(&vs, 1);
        let z = MultiPoly::var(&vs, 2);
        // gcd(2xy(x+z), 4y^2(x+z)) = y(x+z)
        let a = x.mul(&y).mul(&x.add(&z)).scale(&q(2));
        let b = y.pow(2).mul(&x.add(&z)).scale(&q(4));
        let g = gcd(&a, &b);
        assert_eq!(g, y.mul(&x.add(&z)).monic());
    }

    #[test]
    fn eval_exact() {
        let vs = xyz();
        let x = MultiPoly::var(&vs, 0);
        let p = x.pow(2).scale(&q(4));
        assert_eq!(p.eval_q(&[qr(3, 2), q(0), q(0)]), q(9));
    }
}
