//! Vector fields and differential forms with rational-function coefficients
//! on a named chart: Lie bracket, exterior calculus, dual frames, and volume
//! coefficients.
//!
//! A chart may carry extra symbolic parameters (e.g. a coupling constant)
//! that appear in coefficients but are not coordinates: they are never
//! differentiated and have no associated one-form.

mod product;

pub use product::{pushforward_projection, ProductChart, PushforwardError};

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::exprs::{parse_rf, ExprError, MultiPoly, RatFn, Rational, VarSet};
use crate::linalg::{rf_det, rf_inverse};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GeomError {
    #[error("fields live on different charts: `{0}` vs `{1}`")]
    ChartMismatch(String, String),
    #[error("degree error: {0}")]
    DegreeError(String),
    #[error("frame is singular over the rational-function field")]
    SingularFrame,
    #[error(transparent)]
    Expr(#[from] ExprError),
}

pub type GeomResult<T> = Result<T, GeomError>;

/// A coordinate chart: ordered coordinates, optional symbolic parameters, and
/// the polynomial constraints that must stay nonzero on the domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chart {
    pub name: String,
    coords: Vec<String>,
    params: Vec<String>,
    constraints: Vec<RatFn>,
    vars: VarSet,
}

impl Chart {
    pub fn new<S: AsRef<str>>(
        name: &str,
        coords: &[S],
        params: &[S],
        constraint_exprs: &[S],
    ) -> GeomResult<Arc<Chart>> {
        let mut names: Vec<String> = coords.iter().map(|s| s.as_ref().to_string()).collect();
        let coord_names = names.clone();
        names.extend(params.iter().map(|s| s.as_ref().to_string()));
        {
            let mut seen = std::collections::BTreeSet::new();
            for n in &names {
                assert!(seen.insert(n.clone()), "duplicate chart variable `{n}`");
            }
        }
        let vars: VarSet = Arc::new(names);
        let mut constraints = Vec::new();
        for c in constraint_exprs {
            let f = parse_rf(c.as_ref(), &vars)?;
            assert!(!f.is_zero(), "domain constraint must be a nonzero expression");
            constraints.push(f);
        }
        Ok(Arc::new(Chart {
            name: name.to_string(),
            coords: coord_names,
            params: params.iter().map(|s| s.as_ref().to_string()).collect(),
            constraints,
            vars,
        }))
    }

    /// Number of coordinates (the chart dimension; parameters excluded).
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn params(&self) -> &[String] {
        &self.params
    }

    pub fn constraints(&self) -> &[RatFn] {
        &self.constraints
    }

    /// The full polynomial variable context: coordinates then parameters.
    pub fn vars(&self) -> &VarSet {
        &self.vars
    }

    pub fn parse(&self, text: &str) -> GeomResult<RatFn> {
        Ok(parse_rf(text, &self.vars)?)
    }

    pub fn coord_index(&self, name: &str) -> Option<usize> {
        self.coords.iter().position(|c| c == name)
    }

    fn same(self: &Arc<Chart>, other: &Arc<Chart>) -> GeomResult<()> {
        if Arc::ptr_eq(self, other) || **self == **other {
            Ok(())
        } else {
            Err(GeomError::ChartMismatch(
                self.name.clone(),
                other.name.clone(),
            ))
        }
    }
}

/// A vector field: one rational-function coefficient per coordinate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VectorField {
    pub chart: Arc<Chart>,
    comps: Vec<RatFn>,
}

impl VectorField {
    pub fn new(chart: &Arc<Chart>, comps: Vec<RatFn>) -> Self {
        assert_eq!(comps.len(), chart.dim(), "component count != chart dimension");
        VectorField {
            chart: chart.clone(),
            comps,
        }
    }

    pub fn zero(chart: &Arc<Chart>) -> Self {
        VectorField {
            chart: chart.clone(),
            comps: vec![RatFn::zero(chart.vars()); chart.dim()],
        }
    }

    pub fn parse(chart: &Arc<Chart>, comps: &[&str]) -> GeomResult<Self> {
        let mut out = Vec::with_capacity(comps.len());
        for c in comps {
            out.push(chart.parse(c)?);
        }
        Ok(Self::new(chart, out))
    }

    pub fn comps(&self) -> &[RatFn] {
        &self.comps
    }

    pub fn comp(&self, i: usize) -> &RatFn {
        &self.comps[i]
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(RatFn::is_zero)
    }

    pub fn add(&self, other: &Self) -> GeomResult<Self> {
        self.chart.same(&other.chart)?;
        Ok(VectorField {
            chart: self.chart.clone(),
            comps: self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| a.add(b))
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> GeomResult<Self> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        VectorField {
            chart: self.chart.clone(),
            comps: self.comps.iter().map(RatFn::neg).collect(),
        }
    }

    pub fn scale(&self, c: &Rational) -> Self {
        VectorField {
            chart: self.chart.clone(),
            comps: self.comps.iter().map(|f| f.scale(c)).collect(),
        }
    }

    pub fn scale_rf(&self, c: &RatFn) -> Self {
        VectorField {
            chart: self.chart.clone(),
            comps: self.comps.iter().map(|f| f.mul(c)).collect(),
        }
    }

    /// Directional derivative X(f).
    pub fn apply(&self, f: &RatFn) -> RatFn {
        let mut acc = RatFn::zero(self.chart.vars());
        for (i, xi) in self.comps.iter().enumerate() {
            if !xi.is_zero() {
                acc = acc.add(&xi.mul(&f.diff(i)));
            }
        }
        acc
    }

    /// X(f) = 0 as a polynomial identity, avoiding rational-function gcds.
    /// Clears all denominators and tests the resulting polynomial for zero.
    pub fn apply_is_zero(&self, f: &RatFn) -> bool {
        let vars = self.chart.vars();
        let n = f.num();
        let d = f.den();
        // Σ_i X^i (∂_i n · d − n · ∂_i d) = 0, cleared by ∏ den(X^j).
        let mut acc = MultiPoly::zero(vars);
        for (i, xi) in self.comps.iter().enumerate() {
            if xi.is_zero() {
                continue;
            }
            let grad = n.diff(i).mul(d).sub(&n.mul(&d.diff(i)));
            if grad.is_zero() {
                continue;
            }
            let mut term = xi.num().mul(&grad);
            for (j, xj) in self.comps.iter().enumerate() {
                if j != i && !xj.is_zero() {
                    term = term.mul(xj.den());
                }
            }
            acc = acc.add(&term);
        }
        acc.is_zero()
    }

    /// Lie bracket [X, Y], component i = X(Y^i) − Y(X^i).
    pub fn lie_bracket(&self, other: &Self) -> GeomResult<Self> {
        self.chart.same(&other.chart)?;
        let comps = (0..self.chart.dim())
            .map(|i| self.apply(&other.comps[i]).sub(&other.apply(&self.comps[i])))
            .collect();
        Ok(VectorField {
            chart: self.chart.clone(),
            comps,
        })
    }

    /// Exact evaluation of all components at a point (coordinates followed by
    /// parameter values).
    pub fn eval_q(&self, point: &[Rational]) -> Result<Vec<Rational>, ExprError> {
        self.comps.iter().map(|c| c.eval_q(point)).collect()
    }
}

impl fmt::Display for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for (i, c) in self.comps.iter().enumerate() {
            if !c.is_zero() {
                parts.push(format!("({}) d/d{}", c, self.chart.coords[i]));
            }
        }
        if parts.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", parts.join(" + "))
        }
    }
}

/// Strictly increasing coordinate multi-index of a form term.
pub type FormIndex = Vec<u8>;

/// Sort an index list, returning the permutation parity; `None` on repeats.
fn sort_index(mut idx: FormIndex) -> Option<(FormIndex, i8)> {
    let mut sign = 1i8;
    for i in 1..idx.len() {
        let mut j = i;
        while j > 0 && idx[j - 1] > idx[j] {
            idx.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    for w in idx.windows(2) {
        if w[0] == w[1] {
            return None;
        }
    }
    Some((idx, sign))
}

/// A differential k-form stored sparsely over strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DifferentialForm {
    pub chart: Arc<Chart>,
    pub degree: usize,
    terms: BTreeMap<FormIndex, RatFn>,
}

impl DifferentialForm {
    pub fn zero(chart: &Arc<Chart>, degree: usize) -> Self {
        assert!(degree <= chart.dim(), "degree exceeds chart dimension");
        DifferentialForm {
            chart: chart.clone(),
            degree,
            terms: BTreeMap::new(),
        }
    }

    pub fn function(chart: &Arc<Chart>, f: RatFn) -> Self {
        let mut terms = BTreeMap::new();
        if !f.is_zero() {
            terms.insert(Vec::new(), f);
        }
        DifferentialForm {
            chart: chart.clone(),
            degree: 0,
            terms,
        }
    }

    pub fn one_form(chart: &Arc<Chart>, comps: Vec<RatFn>) -> Self {
        assert_eq!(comps.len(), chart.dim());
        let mut terms = BTreeMap::new();
        for (i, c) in comps.into_iter().enumerate() {
            if !c.is_zero() {
                terms.insert(vec![i as u8], c);
            }
        }
        DifferentialForm {
            chart: chart.clone(),
            degree: 1,
            terms,
        }
    }

    /// Insert with sign normalization; unordered or repeated indices allowed.
    pub fn add_term(&mut self, idx: FormIndex, coeff: RatFn) {
        assert_eq!(idx.len(), self.degree);
        if coeff.is_zero() {
            return;
        }
        let Some((sorted, sign)) = sort_index(idx) else {
            return; // repeated index: the term vanishes
        };
        let signed = if sign < 0 { coeff.neg() } else { coeff };
        match self.terms.entry(sorted) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(signed);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let sum = e.get().add(&signed);
                if sum.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = sum;
                }
            }
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&FormIndex, &RatFn)> {
        self.terms.iter()
    }

    pub fn coeff(&self, idx: &[u8]) -> RatFn {
        self.terms
            .get(idx)
            .cloned()
            .unwrap_or_else(|| RatFn::zero(self.chart.vars()))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &Self) -> GeomResult<Self> {
        self.chart.same(&other.chart)?;
        if self.degree != other.degree {
            return Err(GeomError::DegreeError(format!(
                "cannot add a {}-form and a {}-form",
                self.degree, other.degree
            )));
        }
        let mut out = self.clone();
        for (idx, c) in &other.terms {
            out.add_term(idx.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> GeomResult<Self> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        DifferentialForm {
            chart: self.chart.clone(),
            degree: self.degree,
            terms: self
                .terms
                .iter()
                .map(|(i, c)| (i.clone(), c.neg()))
                .collect(),
        }
    }

    pub fn scale_rf(&self, f: &RatFn) -> Self {
        let mut out = DifferentialForm::zero(&self.chart, self.degree);
        for (idx, c) in &self.terms {
            out.add_term(idx.clone(), c.mul(f));
        }
        out
    }

    /// Wedge product, graded-antisymmetric.
    pub fn wedge(&self, other: &Self) -> GeomResult<Self> {
        self.chart.same(&other.chart)?;
        let degree = self.degree + other.degree;
        if degree > self.chart.dim() {
            return Ok(DifferentialForm::zero(&self.chart, self.chart.dim()));
        }
        let mut out = DifferentialForm::zero(&self.chart, degree);
        for (ia, ca) in &self.terms {
            for (ib, cb) in &other.terms {
                let mut idx = ia.clone();
                idx.extend_from_slice(ib);
                out.add_term(idx, ca.mul(cb));
            }
        }
        Ok(out)
    }

    /// Exterior derivative by the coordinate formula.
    pub fn exterior_derivative(&self) -> Self {
        let dim = self.chart.dim();
        if self.degree >= dim {
            return DifferentialForm::zero(&self.chart, dim.min(self.degree + 1));
        }
        let mut out = DifferentialForm::zero(&self.chart, self.degree + 1);
        for (idx, c) in &self.terms {
            for j in 0..dim {
                let dc = c.diff(j);
                if dc.is_zero() {
                    continue;
                }
                let mut nidx = vec![j as u8];
                nidx.extend_from_slice(idx);
                out.add_term(nidx, dc);
            }
        }
        out
    }

    /// Interior product ι_X α. Errors on degree 0.
    pub fn interior(&self, x: &VectorField) -> GeomResult<Self> {
        self.chart.same(&x.chart)?;
        if self.degree == 0 {
            return Err(GeomError::DegreeError(
                "interior product of a 0-form".into(),
            ));
        }
        let mut out = DifferentialForm::zero(&self.chart, self.degree - 1);
        for (idx, c) in &self.terms {
            for (p, &i) in idx.iter().enumerate() {
                let xi = x.comp(i as usize);
                if xi.is_zero() {
                    continue;
                }
                let mut rest: FormIndex = idx.clone();
                rest.remove(p);
                let mut coeff = c.mul(xi);
                if p % 2 == 1 {
                    coeff = coeff.neg();
                }
                out.add_term(rest, coeff);
            }
        }
        Ok(out)
    }

    /// Lie derivative via the Cartan formula ι_X dα + d ι_X α.
    pub fn lie_derivative(&self, x: &VectorField) -> GeomResult<Self> {
        if self.degree == 0 {
            // L_X f = X(f)
            let f = self.coeff(&[]);
            return Ok(DifferentialForm::function(&self.chart, x.apply(&f)));
        }
        let a = self.exterior_derivative().interior(x)?;
        let b = self.interior(x)?.exterior_derivative();
        a.add(&b)
    }

    /// Pair a 1-form with a vector field: α(X).
    pub fn pair(&self, x: &VectorField) -> GeomResult<RatFn> {
        if self.degree != 1 {
            return Err(GeomError::DegreeError("pairing needs a 1-form".into()));
        }
        Ok(self.interior(x)?.coeff(&[]))
    }
}

impl fmt::Display for DifferentialForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let coords = self.chart.coords();
        let mut parts = Vec::new();
        for (idx, c) in &self.terms {
            let basis: Vec<String> = idx.iter().map(|&i| format!("d{}", coords[i as usize])).collect();
            if basis.is_empty() {
                parts.push(format!("({c})"));
            } else {
                parts.push(format!("({}) {}", c, basis.join("^")));
            }
        }
        write!(f, "{}", parts.join(" + "))
    }
}

/// The dual frame of n independent fields on an n-dimensional chart:
/// one-forms α_j with α_j(Z_i) = δ_ij, via exact matrix inversion.
pub fn dual_frame(fields: &[VectorField]) -> GeomResult<Vec<DifferentialForm>> {
    assert!(!fields.is_empty());
    let chart = fields[0].chart.clone();
    for f in fields {
        chart.same(&f.chart)?;
    }
    let n = chart.dim();
    if fields.len() != n {
        return Err(GeomError::DegreeError(format!(
            "dual frame needs {n} fields, got {}",
            fields.len()
        )));
    }
    let m: Vec<Vec<RatFn>> = fields.iter().map(|f| f.comps.to_vec()).collect();
    let inv = rf_inverse(&m, chart.vars()).map_err(|_| GeomError::SingularFrame)?;
    let mut frame = Vec::with_capacity(n);
    for j in 0..n {
        let comps: Vec<RatFn> = (0..n).map(|k| inv[k][j].clone()).collect();
        frame.push(DifferentialForm::one_form(&chart, comps));
    }
    Ok(frame)
}

/// Coefficient of the volume form in Z_1 ∧ ... ∧ Z_n: the determinant of the
/// component matrix.
pub fn wedge_volume(fields: &[VectorField]) -> GeomResult<RatFn> {
    assert!(!fields.is_empty());
    let chart = fields[0].chart.clone();
    for f in fields {
        chart.same(&f.chart)?;
    }
    if fields.len() != chart.dim() {
        return Err(GeomError::DegreeError(format!(
            "wedge volume needs {} fields, got {}",
            chart.dim(),
            fields.len()
        )));
    }
    let m: Vec<Vec<RatFn>> = fields.iter().map(|f| f.comps.to_vec()).collect();
    Ok(rf_det(&m, chart.vars()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn riccati_chart() -> Arc<Chart> {
        Chart::new("M", &["x", "y", "z"], &[], &["y*z"]).unwrap()
    }

    fn field(chart: &Arc<Chart>, comps: [&str; 3]) -> VectorField {
        VectorField::parse(chart, &comps).unwrap()
    }

    #[test]
    fn riccati_bracket_x1_x2() {
        let m = riccati_chart();
        let x1 = field(&m, ["4*x^2", "4*x*y", "-4*x*z"]);
        let x2 = field(&m, ["-1", "0", "0"]);
        let x3 = field(&m, ["2*x", "y", "0"]);
        let x4 = field(&m, ["0", "0", "-2*z"]);
        // [X1, X2] = 4 X3 + 2 X4
        let br = x1.lie_bracket(&x2).unwrap();
        let expect = x3.scale(&crate::exprs::q(4)).add(&x4.scale(&crate::exprs::q(2))).unwrap();
        assert_eq!(br, expect);
        // [X1, X3] = -2 X1, [X2, X3] = 2 X2
        assert_eq!(x1.lie_bracket(&x3).unwrap(), x1.scale(&crate::exprs::q(-2)));
        assert_eq!(x2.lie_bracket(&x3).unwrap(), x2.scale(&crate::exprs::q(2)));
    }

    #[test]
    fn coordinate_fields_commute() {
        let m = riccati_chart();
        let dx = field(&m, ["1", "0", "0"]);
        let dy = field(&m, ["0", "1", "0"]);
        assert!(dx.lie_bracket(&dy).unwrap().is_zero());
    }

    #[test]
    fn schrodinger_bracket() {
        let c = Chart::new("R2", &["x", "y"], &[], &[]).unwrap();
        let x1 = VectorField::parse(&c, &["x", "-y"]).unwrap();
        let x2 = VectorField::parse(&c, &["y", "0"]).unwrap();
        let x3 = VectorField::parse(&c, &["0", "x"]).unwrap();
        // [X2, X3] = -X1
        assert_eq!(x2.lie_bracket(&x3).unwrap(), x1.neg());
    }

    #[test]
    fn exterior_derivative_of_dual_frame_form() {
        let m = riccati_chart();
        // d(y^-2 dx) = 2 y^-3 dx ∧ dy
        let a1 = DifferentialForm::one_form(
            &m,
            vec![
                m.parse("1/y^2").unwrap(),
                m.parse("0").unwrap(),
                m.parse("0").unwrap(),
            ],
        );
        let d = a1.exterior_derivative();
        assert_eq!(d.coeff(&[0, 1]), m.parse("2/y^3").unwrap());
        // d∘d = 0
        assert!(d.exterior_derivative().is_zero());
    }

    #[test]
    fn top_degree_derivative_vanishes() {
        let c = Chart::new("R2", &["x", "y"], &[], &[]).unwrap();
        let mut w = DifferentialForm::zero(&c, 2);
        w.add_term(vec![0, 1], c.parse("x*y").unwrap());
        assert!(w.exterior_derivative().is_zero());
    }

    #[test]
    fn riccati_contact_volume() {
        let m = riccati_chart();
        let eta = DifferentialForm::one_form(
            &m,
            vec![
                m.parse("1/y^2").unwrap(),
                m.parse("1/y").unwrap(),
                m.parse("1/z").unwrap(),
            ],
        );
        let vol = eta.wedge(&eta.exterior_derivative()).unwrap();
        // η ∧ dη = (2/(y^3 z)) dx∧dy∧dz
        assert_eq!(vol.coeff(&[0, 1, 2]), m.parse("2/(y^3*z)").unwrap());
    }

    #[test]
    fn interior_product_gives_hamiltonian() {
        let m = riccati_chart();
        let eta = DifferentialForm::one_form(
            &m,
            vec![
                m.parse("1/y^2").unwrap(),
                m.parse("1/y").unwrap(),
                m.parse("1/z").unwrap(),
            ],
        );
        let x2 = field(&m, ["-1", "0", "0"]);
        // ι_{X2} η = -1/y^2 = -h2
        assert_eq!(eta.pair(&x2).unwrap(), m.parse("-1/y^2").unwrap());
    }

    #[test]
    fn lie_derivative_along_coordinate_field() {
        let c = Chart::new("R2", &["x", "y"], &[], &[]).unwrap();
        let dxf = DifferentialForm::one_form(&c, vec![c.parse("1").unwrap(), c.parse("0").unwrap()]);
        let px = VectorField::parse(&c, &["1", "0"]).unwrap();
        assert!(dxf.lie_derivative(&px).unwrap().is_zero());
    }

    #[test]
    fn dual_frame_riccati_symmetries() {
        let m = riccati_chart();
        let z1 = field(&m, ["y^2", "0", "0"]);
        let z2 = field(&m, ["0", "y", "0"]);
        let z3 = field(&m, ["0", "0", "z"]);
        let frame = dual_frame(&[z1.clone(), z2.clone(), z3.clone()]).unwrap();
        assert_eq!(frame[0].coeff(&[0]), m.parse("1/y^2").unwrap());
        assert_eq!(frame[1].coeff(&[1]), m.parse("1/y").unwrap());
        assert_eq!(frame[2].coeff(&[2]), m.parse("1/z").unwrap());
        // Pairing reproduces the identity matrix exactly.
        let fields = [z1, z2, z3];
        for (j, a) in frame.iter().enumerate() {
            for (i, z) in fields.iter().enumerate() {
                let v = a.pair(z).unwrap();
                if i == j {
                    assert!(v.as_constant() == Some(crate::exprs::q(1)));
                } else {
                    assert!(v.is_zero());
                }
            }
        }
    }

    #[test]
    fn dual_frame_rejects_singular() {
        let m = riccati_chart();
        let z1 = field(&m, ["y^2", "0", "0"]);
        let z1b = field(&m, ["y^2", "0", "0"]);
        let z3 = field(&m, ["0", "0", "z"]);
        assert!(matches!(
            dual_frame(&[z1, z1b, z3]),
            Err(GeomError::SingularFrame)
        ));
    }

    #[test]
    fn wedge_volume_riccati() {
        let m = riccati_chart();
        let y2 = field(&m, ["-1", "0", "0"]);
        let y3 = field(&m, ["2*x", "y", "-z"]);
        let y4 = field(&m, ["0", "0", "-2*z"]);
        // (-∂x)∧(2x∂x + y∂y - z∂z)∧(-2z∂z): nonvanishing on yz ≠ 0.
        assert_eq!(
            wedge_volume(&[y2, y3, y4]).unwrap(),
            m.parse("2*y*z").unwrap()
        );
        // Repeated field: zero
        let dx = field(&m, ["1", "0", "0"]);
        let dx2 = field(&m, ["1", "0", "0"]);
        let dz = field(&m, ["0", "0", "1"]);
        assert!(wedge_volume(&[dx, dx2, dz]).unwrap().is_zero());
    }
}
