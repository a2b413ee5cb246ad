//! Abstract Lie algebras, the linear Poisson (KKS) structure on their duals,
//! Casimir verification, coproducts and coactions onto tagged product duals,
//! and momentum-map pullbacks that turn Casimirs into constants of motion.
//!
//! A product dual is a single polynomial ring in tagged coordinates
//! `v_(a)`; each copy is either the full dual or the dual of a distinguished
//! subalgebra (the coordinates of the complementary ideal vanish there).

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num::Zero;

use crate::exprs::{parse_poly, ExprError, MultiPoly, RatFn, Rational, VarSet};
use crate::geometry::{GeomError, ProductChart};
use crate::structures::{poisson_bracket, StructError, StructurePresentation};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CoalgError {
    #[error("operands live on different duals")]
    AlgebraMismatch,
    #[error("the split is not a semidirect sum: {0}")]
    NotSemidirect(String),
    #[error("copy layout does not match the assignments: {0}")]
    LayoutMismatch(String),
    #[error("structure constants invalid: {0}")]
    BadConstants(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Struct(#[from] StructError),
}

pub type CoalgResult<T> = Result<T, CoalgError>;

/// A finite-dimensional real Lie algebra given by structure constants
/// c_ij^k over a named basis; antisymmetry and the Jacobi identity are
/// checked at construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbstractLieAlgebra {
    pub name: String,
    pub basis: Vec<String>,
    sc: Vec<Vec<Vec<Rational>>>,
}

impl AbstractLieAlgebra {
    /// `brackets` lists [v_i, v_j] = Σ (coeff, k) for i < j; omitted pairs
    /// commute.
    pub fn new(
        name: &str,
        basis: &[String],
        brackets: &[((usize, usize), Vec<(usize, Rational)>)],
    ) -> CoalgResult<Arc<Self>> {
        let n = basis.len();
        let mut sc = vec![vec![vec![Rational::zero(); n]; n]; n];
        for ((i, j), terms) in brackets {
            if i == j {
                return Err(CoalgError::BadConstants(format!(
                    "bracket [{}, {}] of an element with itself",
                    basis[*i], basis[*j]
                )));
            }
            for (k, c) in terms {
                sc[*i][*j][*k] = c.clone();
                sc[*j][*i][*k] = -c.clone();
            }
        }
        let alg = AbstractLieAlgebra {
            name: name.to_string(),
            basis: basis.to_vec(),
            sc,
        };
        if let Some(msg) = alg.jacobi_violation() {
            return Err(CoalgError::BadConstants(msg));
        }
        Ok(Arc::new(alg))
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn c(&self, i: usize, j: usize, k: usize) -> &Rational {
        &self.sc[i][j][k]
    }

    fn jacobi_violation(&self) -> Option<String> {
        let n = self.dim();
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let mut total = vec![Rational::zero(); n];
                    for (a, b, c) in [(i, j, k), (j, k, i), (k, i, j)] {
                        for m in 0..n {
                            let cab = &self.sc[a][b][m];
                            if cab.is_zero() {
                                continue;
                            }
                            for l in 0..n {
                                total[l] += cab * &self.sc[m][c][l];
                            }
                        }
                    }
                    if total.iter().any(|x| !x.is_zero()) {
                        return Some(format!(
                            "Jacobi identity fails on ({}, {}, {})",
                            self.basis[i], self.basis[j], self.basis[k]
                        ));
                    }
                }
            }
        }
        None
    }

    /// Indices `h` span a subalgebra.
    pub fn is_subalgebra(&self, h: &BTreeSet<usize>) -> bool {
        for &i in h {
            for &j in h {
                for k in 0..self.dim() {
                    if !self.sc[i][j][k].is_zero() && !h.contains(&k) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Indices `p` span an ideal.
    pub fn is_ideal(&self, p: &BTreeSet<usize>) -> bool {
        for i in 0..self.dim() {
            for &j in p {
                for k in 0..self.dim() {
                    if !self.sc[i][j][k].is_zero() && !p.contains(&k) {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// One copy of a product dual: the full dual or the dual of a subalgebra
/// (complementary ideal coordinates vanish on it).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CopyKind {
    Full,
    Sub(BTreeSet<usize>),
}

impl CopyKind {
    fn indices(&self, n: usize) -> Vec<usize> {
        match self {
            CopyKind::Full => (0..n).collect(),
            CopyKind::Sub(h) => h.iter().copied().collect(),
        }
    }

    fn contains(&self, i: usize) -> bool {
        match self {
            CopyKind::Full => true,
            CopyKind::Sub(h) => h.contains(&i),
        }
    }
}

/// The coordinate ring of a (product of) dual space(s).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductDual {
    pub algebra: Arc<AbstractLieAlgebra>,
    pub copies: Vec<CopyKind>,
    vars: VarSet,
    /// (copy, basis index) → variable position.
    index: BTreeMap<(usize, usize), usize>,
}

impl ProductDual {
    pub fn single(algebra: &Arc<AbstractLieAlgebra>) -> Arc<Self> {
        let vars: VarSet = Arc::new(algebra.basis.clone());
        let index = (0..algebra.dim()).map(|i| ((0, i), i)).collect();
        Arc::new(ProductDual {
            algebra: algebra.clone(),
            copies: vec![CopyKind::Full],
            vars,
            index,
        })
    }

    pub fn product(algebra: &Arc<AbstractLieAlgebra>, copies: Vec<CopyKind>) -> Arc<Self> {
        let mut names = Vec::new();
        let mut index = BTreeMap::new();
        for (a, copy) in copies.iter().enumerate() {
            for i in copy.indices(algebra.dim()) {
                index.insert((a, i), names.len());
                names.push(format!("{}_({})", algebra.basis[i], a + 1));
            }
        }
        Arc::new(ProductDual {
            algebra: algebra.clone(),
            copies,
            vars: Arc::new(names),
            index,
        })
    }

    pub fn vars(&self) -> &VarSet {
        &self.vars
    }

    pub fn var_position(&self, copy: usize, basis_idx: usize) -> Option<usize> {
        self.index.get(&(copy, basis_idx)).copied()
    }
}

/// A polynomial on a (product) dual.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyOnDual {
    pub dual: Arc<ProductDual>,
    pub poly: MultiPoly,
}

impl PolyOnDual {
    pub fn parse(dual: &Arc<ProductDual>, text: &str) -> CoalgResult<Self> {
        Ok(PolyOnDual {
            dual: dual.clone(),
            poly: parse_poly(text, dual.vars())?,
        })
    }

    pub fn from_poly(dual: &Arc<ProductDual>, poly: MultiPoly) -> Self {
        PolyOnDual {
            dual: dual.clone(),
            poly,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.poly.is_zero()
    }

    fn same_dual(&self, other: &Self) -> CoalgResult<()> {
        if Arc::ptr_eq(&self.dual, &other.dual) || *self.dual == *other.dual {
            Ok(())
        } else {
            Err(CoalgError::AlgebraMismatch)
        }
    }
}

/// KKS bracket extended to the product dual: {v_i^(a), v_j^(b)} =
/// δ_ab Σ_k c_ij^k v_k^(a), extended by bilinearity and Leibniz.
pub fn kks_bracket(f: &PolyOnDual, g: &PolyOnDual) -> CoalgResult<PolyOnDual> {
    f.same_dual(g)?;
    let dual = &f.dual;
    let alg = &dual.algebra;
    let n = alg.dim();
    let mut acc = MultiPoly::zero(dual.vars());
    for (a, copy) in dual.copies.iter().enumerate() {
        let idxs = copy.indices(n);
        for (pi, &i) in idxs.iter().enumerate() {
            let vi = dual.var_position(a, i).unwrap();
            let dfi = f.poly.diff(vi);
            let dgi = g.poly.diff(vi);
            if dfi.is_zero() && dgi.is_zero() {
                continue;
            }
            for &j in &idxs[pi + 1..] {
                let vj = dual.var_position(a, j).unwrap();
                let dfj = f.poly.diff(vj);
                let dgj = g.poly.diff(vj);
                let pair = dfi.mul(&dgj).sub(&dfj.mul(&dgi));
                if pair.is_zero() {
                    continue;
                }
                // Σ_k c_ij^k v_k^(a); on a subalgebra copy every k with a
                // nonzero constant lies in the copy.
                for k in 0..n {
                    let c = alg.c(i, j, k);
                    if c.is_zero() {
                        continue;
                    }
                    let vk = dual.var_position(a, k).ok_or_else(|| {
                        CoalgError::NotSemidirect(format!(
                            "bracket [{}, {}] leaves copy {}",
                            alg.basis[i],
                            alg.basis[j],
                            a + 1
                        ))
                    })?;
                    let term = MultiPoly::var(dual.vars(), vk).mul(&pair).scale(c);
                    acc = acc.add(&term);
                }
            }
        }
    }
    Ok(PolyOnDual::from_poly(dual, acc))
}

/// {C, v_i} = 0 for every basis coordinate of a single dual.
pub fn casimir_check(c: &PolyOnDual) -> CoalgResult<bool> {
    let dual = &c.dual;
    for a in 0..dual.copies.len() {
        for i in dual.copies[a].indices(dual.algebra.dim()) {
            let vi = dual.var_position(a, i).unwrap();
            let coord = PolyOnDual::from_poly(dual, MultiPoly::var(dual.vars(), vi));
            if !kks_bracket(c, &coord)?.is_zero() {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Substitute each source dual variable by a polynomial on the target dual.
fn substitute(
    f: &PolyOnDual,
    target: &Arc<ProductDual>,
    image: impl Fn(usize, usize) -> MultiPoly,
) -> PolyOnDual {
    let src = &f.dual;
    let mut images = Vec::with_capacity(src.vars().len());
    for (a, copy) in src.copies.iter().enumerate() {
        for i in copy.indices(src.algebra.dim()) {
            debug_assert_eq!(images.len(), src.var_position(a, i).unwrap());
            images.push(image(a, i));
        }
    }
    PolyOnDual::from_poly(target, f.poly.subst(&images))
}

/// k-th order coproduct: v_i ↦ Σ_{a=1..k} v_i^(a) on the k-fold full dual.
pub fn coproduct(f: &PolyOnDual, k: usize) -> CoalgResult<PolyOnDual> {
    assert!(k >= 2, "coproduct order must be at least 2");
    mixed_prolong(f, k, 1, &BTreeSet::new())
}

/// ℓ-th order coaction for a semidirect split 𝔤 = 𝔥 ⋉ 𝔭: subalgebra
/// coordinates spread over all ℓ copies, ideal coordinates stay on copy 1.
pub fn coaction(
    f: &PolyOnDual,
    subalgebra: &BTreeSet<usize>,
    ell: usize,
) -> CoalgResult<PolyOnDual> {
    mixed_prolong(f, 1, ell, subalgebra)
}

/// (Δ^[k] ⊗ id^{ℓ−1}) ∘ φ^[ℓ]: k full copies followed by ℓ−1 subalgebra
/// copies; subalgebra coordinates sum over every copy, ideal coordinates only
/// over the k full ones. `coproduct` is the ℓ = 1 case.
pub fn mixed_prolong(
    f: &PolyOnDual,
    k: usize,
    ell: usize,
    subalgebra: &BTreeSet<usize>,
) -> CoalgResult<PolyOnDual> {
    assert!(k >= 1 && ell >= 1 && k + ell >= 2);
    if f.dual.copies.len() != 1 {
        return Err(CoalgError::LayoutMismatch(
            "prolongation expects a single dual".into(),
        ));
    }
    let alg = &f.dual.algebra;
    if ell > 1 {
        let complement: BTreeSet<usize> =
            (0..alg.dim()).filter(|i| !subalgebra.contains(i)).collect();
        if !alg.is_subalgebra(subalgebra) {
            return Err(CoalgError::NotSemidirect(
                "distinguished indices do not span a subalgebra".into(),
            ));
        }
        if !alg.is_ideal(&complement) {
            return Err(CoalgError::NotSemidirect(
                "complement does not span an ideal".into(),
            ));
        }
    }
    let mut copies = vec![CopyKind::Full; k];
    copies.extend(std::iter::repeat(CopyKind::Sub(subalgebra.clone())).take(ell - 1));
    let target = ProductDual::product(alg, copies);
    let tvars = target.vars().clone();
    Ok(substitute(f, &target, |_, i| {
        let mut acc = MultiPoly::zero(&tvars);
        for a in 0..k + ell - 1 {
            if let Some(p) = target.var_position(a, i) {
                acc = acc.add(&MultiPoly::var(&tvars, p));
            }
        }
        acc
    }))
}

/// Replace copy `c` of a product dual by `k` full copies (the coproduct
/// applied on one tensor leg).
pub fn coproduct_on_copy(f: &PolyOnDual, c: usize, k: usize) -> CoalgResult<PolyOnDual> {
    let src = &f.dual;
    if !matches!(src.copies[c], CopyKind::Full) {
        return Err(CoalgError::LayoutMismatch(
            "can only expand a full copy".into(),
        ));
    }
    let mut copies = Vec::new();
    for (a, copy) in src.copies.iter().enumerate() {
        if a == c {
            copies.extend(std::iter::repeat(CopyKind::Full).take(k));
        } else {
            copies.push(copy.clone());
        }
    }
    let target = ProductDual::product(&src.algebra, copies);
    let tvars = target.vars().clone();
    Ok(substitute(f, &target, |a, i| {
        if a == c {
            let mut acc = MultiPoly::zero(&tvars);
            for b in c..c + k {
                acc = acc.add(&MultiPoly::var(
                    &tvars,
                    target.var_position(b, i).unwrap(),
                ));
            }
            acc
        } else {
            let b = if a < c { a } else { a + k - 1 };
            MultiPoly::var(&tvars, target.var_position(b, i).unwrap())
        }
    }))
}

/// Embed a polynomial into a larger product dual; `copy_map[a]` is the target
/// copy of source copy `a`.
pub fn embed_into(
    f: &PolyOnDual,
    target: &Arc<ProductDual>,
    copy_map: &[usize],
) -> CoalgResult<PolyOnDual> {
    let src = &f.dual;
    assert_eq!(copy_map.len(), src.copies.len());
    let tvars = target.vars().clone();
    for (a, copy) in src.copies.iter().enumerate() {
        for i in copy.indices(src.algebra.dim()) {
            if target.var_position(copy_map[a], i).is_none() {
                return Err(CoalgError::LayoutMismatch(format!(
                    "target copy {} lacks coordinate {}",
                    copy_map[a] + 1,
                    src.algebra.basis[i]
                )));
            }
        }
    }
    Ok(substitute(f, target, |a, i| {
        MultiPoly::var(&tvars, target.var_position(copy_map[a], i).unwrap())
    }))
}

/// Permute the copies of a product dual: `perm[a]` is the image of copy `a`.
pub fn permute_copies(f: &PolyOnDual, perm: &[usize]) -> CoalgResult<PolyOnDual> {
    let src = &f.dual;
    assert_eq!(perm.len(), src.copies.len());
    for (a, &b) in perm.iter().enumerate() {
        if src.copies[a] != src.copies[b] {
            return Err(CoalgError::LayoutMismatch(format!(
                "copies {} and {} have different kinds",
                a + 1,
                b + 1
            )));
        }
    }
    let tvars = src.vars().clone();
    let target = src.clone();
    Ok(substitute(f, &target, |a, i| {
        MultiPoly::var(&tvars, target.var_position(perm[a], i).unwrap())
    }))
}

/// A Lie-algebra morphism into the admissible functions of a structure: basis
/// element i ↦ h_i on the chart.
#[derive(Debug, Clone)]
pub struct MomentumAssignment {
    pub algebra: Arc<AbstractLieAlgebra>,
    pub structure: StructurePresentation,
    pub map: BTreeMap<usize, RatFn>,
}

impl MomentumAssignment {
    /// Verify {h_i, h_j} = Σ_k c_ij^k h_k exactly, for all pairs whose images
    /// are defined (central constants included).
    pub fn verify_morphism(&self) -> CoalgResult<bool> {
        let idxs: Vec<usize> = self.map.keys().copied().collect();
        for (p, &i) in idxs.iter().enumerate() {
            for &j in &idxs[p + 1..] {
                let lhs = poisson_bracket(&self.structure, &self.map[&i], &self.map[&j])?;
                let vars = self.structure.chart().vars();
                let mut rhs = RatFn::zero(vars);
                for k in 0..self.algebra.dim() {
                    let c = self.algebra.c(i, j, k);
                    if c.is_zero() {
                        continue;
                    }
                    let Some(hk) = self.map.get(&k) else {
                        return Err(CoalgError::LayoutMismatch(format!(
                            "bracket [{}, {}] needs unassigned {}",
                            self.algebra.basis[i], self.algebra.basis[j], self.algebra.basis[k]
                        )));
                    };
                    rhs = rhs.add(&hk.scale(c));
                }
                if lhs != rhs {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

/// Pull a polynomial on a product dual back through one momentum assignment
/// per copy: v_i^(a) ↦ h_i of assignment a, expressed on the product chart.
/// An assignment is transported either by lifting onto a named block of the
/// product (copy-of-a-factor layouts) or by matching its chart's coordinate
/// names inside the product chart (assignments already written in product
/// coordinates). The result is an exact rational function on the product
/// chart.
pub fn pullback(
    f: &PolyOnDual,
    assignments: &[(&MomentumAssignment, Option<usize>)],
    product: &ProductChart,
) -> CoalgResult<RatFn> {
    let src = &f.dual;
    if assignments.len() != src.copies.len() {
        return Err(CoalgError::LayoutMismatch(format!(
            "{} copies vs {} assignments",
            src.copies.len(),
            assignments.len(),
        )));
    }
    let mut images = Vec::with_capacity(src.vars().len());
    for (a, copy) in src.copies.iter().enumerate() {
        let (assignment, block) = &assignments[a];
        for i in copy.indices(src.algebra.dim()) {
            let Some(h) = assignment.map.get(&i) else {
                return Err(CoalgError::LayoutMismatch(format!(
                    "assignment {} lacks an image for {}",
                    a + 1,
                    src.algebra.basis[i]
                )));
            };
            let image = match block {
                Some(b) => product.lift_rf(h, *b)?,
                None => h.embed_by_name(product.chart.vars()).ok_or_else(|| {
                    CoalgError::LayoutMismatch(format!(
                        "assignment {} uses coordinates missing from the product",
                        a + 1
                    ))
                })?,
            };
            images.push(image);
        }
    }
    Ok(RatFn::from_poly(f.poly.clone()).subst(&images)?)
}

/// The direct product (λ) of the images of one algebra element under several
/// assignments: λ(φ_1(v), ..., φ_k(v)).
pub fn lambda_of_element(
    assignments: &[&MomentumAssignment],
    product: &ProductChart,
    basis_idx: usize,
) -> CoalgResult<RatFn> {
    let mut fns = Vec::with_capacity(assignments.len());
    for a in assignments {
        let Some(h) = a.map.get(&basis_idx) else {
            return Err(CoalgError::LayoutMismatch(format!(
                "assignment lacks an image for index {basis_idx}"
            )));
        };
        fns.push(h.clone());
    }
    Ok(product.lambda(&fns)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprs::{q, qr};
    use crate::geometry::Chart;

    /// sl(2,ℝ) with [e1,e2] = −2e1, [e1,e3] = −e2, [e2,e3] = −2e3.
    fn sl2() -> Arc<AbstractLieAlgebra> {
        AbstractLieAlgebra::new(
            "sl2",
            &["e1".into(), "e2".into(), "e3".into()],
            &[
                ((0, 1), vec![(0, q(-2))]),
                ((0, 2), vec![(1, q(-1))]),
                ((1, 2), vec![(2, q(-2))]),
            ],
        )
        .unwrap()
    }

    /// Centrally extended Schrödinger algebra on v0..v5 with the bracket
    /// table of the plane Hamiltonians h0..h5.
    fn shat1() -> Arc<AbstractLieAlgebra> {
        let names: Vec<String> = (0..6).map(|i| format!("v{i}")).collect();
        AbstractLieAlgebra::new(
            "shat1",
            &names,
            &[
                ((1, 2), vec![(2, q(2))]),
                ((1, 3), vec![(3, q(-2))]),
                ((1, 4), vec![(4, q(1))]),
                ((1, 5), vec![(5, q(-1))]),
                ((2, 3), vec![(1, q(1))]),
                ((2, 5), vec![(4, q(1))]),
                ((3, 4), vec![(5, q(1))]),
                ((4, 5), vec![(0, q(1))]),
            ],
        )
        .unwrap()
    }

    /// Schrödinger algebra 𝒮(1) = sl(2,ℝ) ⋉ ℝ²: the same table without the
    /// central extension.
    fn s1() -> Arc<AbstractLieAlgebra> {
        let names: Vec<String> = (1..6).map(|i| format!("v{i}")).collect();
        AbstractLieAlgebra::new(
            "s1",
            &names,
            &[
                ((0, 1), vec![(1, q(2))]),
                ((0, 2), vec![(2, q(-2))]),
                ((0, 3), vec![(3, q(1))]),
                ((0, 4), vec![(4, q(-1))]),
                ((1, 2), vec![(0, q(1))]),
                ((1, 4), vec![(3, q(1))]),
                ((2, 3), vec![(4, q(1))]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn kks_bracket_reproduces_constants() {
        let a = sl2();
        let d = ProductDual::single(&a);
        let e1 = PolyOnDual::parse(&d, "e1").unwrap();
        let e2 = PolyOnDual::parse(&d, "e2").unwrap();
        let br = kks_bracket(&e1, &e2).unwrap();
        assert_eq!(br, PolyOnDual::parse(&d, "-2*e1").unwrap());
        // {v, v} = 0
        assert!(kks_bracket(&e1, &e1).unwrap().is_zero());
    }

    #[test]
    fn abelian_brackets_vanish() {
        let names: Vec<String> = vec!["a".into(), "b".into()];
        let ab = AbstractLieAlgebra::new("ab", &names, &[]).unwrap();
        let d = ProductDual::single(&ab);
        let f = PolyOnDual::parse(&d, "a^2*b - a").unwrap();
        let g = PolyOnDual::parse(&d, "b^3 + a*b").unwrap();
        assert!(kks_bracket(&f, &g).unwrap().is_zero());
    }

    #[test]
    fn bad_constants_rejected() {
        // [a,b] = c, [a,c] = a, [b,c] = b fails Jacobi.
        let names: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let r = AbstractLieAlgebra::new(
            "bad",
            &names,
            &[
                ((0, 1), vec![(2, q(1))]),
                ((0, 2), vec![(0, q(1))]),
                ((1, 2), vec![(1, q(1))]),
            ],
        );
        assert!(matches!(r, Err(CoalgError::BadConstants(_))));
    }

    #[test]
    fn casimirs_of_the_three_algebras() {
        let d = ProductDual::single(&sl2());
        let c = PolyOnDual::parse(&d, "e1*e3 - 1/4*e2^2").unwrap();
        assert!(casimir_check(&c).unwrap());
        let broken = PolyOnDual::parse(&d, "e1*e3").unwrap();
        assert!(!casimir_check(&broken).unwrap());

        let d = ProductDual::single(&shat1());
        let c = PolyOnDual::parse(
            &d,
            "2*(v3*v4^2 - v2*v5^2 - v1*v4*v5) - v0*(v1^2 + 4*v2*v3)",
        )
        .unwrap();
        assert!(casimir_check(&c).unwrap());

        let d = ProductDual::single(&s1());
        let c = PolyOnDual::parse(&d, "v3*v4^2 - v2*v5^2 - v1*v4*v5").unwrap();
        assert!(casimir_check(&c).unwrap());
    }

    #[test]
    fn coproduct_linear_and_morphism() {
        let a = sl2();
        let d = ProductDual::single(&a);
        let e1 = PolyOnDual::parse(&d, "e1").unwrap();
        let c3 = coproduct(&e1, 3).unwrap();
        assert_eq!(
            c3,
            PolyOnDual::parse(&c3.dual, "e1_(1) + e1_(2) + e1_(3)").unwrap()
        );
        // Δ is a Poisson morphism on a quadratic pair.
        let f = PolyOnDual::parse(&d, "e1*e3 + e2").unwrap();
        let g = PolyOnDual::parse(&d, "e2^2 - e1").unwrap();
        let lhs = coproduct(&kks_bracket(&f, &g).unwrap(), 2).unwrap();
        let rhs = kks_bracket(&coproduct(&f, 2).unwrap(), &coproduct(&g, 2).unwrap()).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn coproduct_is_coassociative() {
        let a = shat1();
        let d = ProductDual::single(&a);
        let f = PolyOnDual::parse(&d, "v1^2*v4 - 3*v2*v3 + v5").unwrap();
        let two = coproduct(&f, 2).unwrap();
        let left = coproduct_on_copy(&two, 0, 2).unwrap();
        let right = coproduct_on_copy(&two, 1, 2).unwrap();
        assert_eq!(left, right);
        // Both equal the third-order coproduct.
        assert_eq!(left, coproduct(&f, 3).unwrap());
    }

    #[test]
    fn coaction_splits_subalgebra_and_ideal() {
        let a = shat1();
        let d = ProductDual::single(&a);
        let h: BTreeSet<usize> = [1, 2, 3].into_iter().collect();
        // φ^[2](v4) = v4_(1): the ideal part stays on the first copy.
        let v4 = PolyOnDual::parse(&d, "v4").unwrap();
        let c = coaction(&v4, &h, 2).unwrap();
        assert_eq!(c, PolyOnDual::parse(&c.dual, "v4_(1)").unwrap());
        // φ^[2](v1) = v1_(1) + v1_(2): subalgebra linearity.
        let v1 = PolyOnDual::parse(&d, "v1").unwrap();
        let c = coaction(&v1, &h, 2).unwrap();
        assert_eq!(c, PolyOnDual::parse(&c.dual, "v1_(1) + v1_(2)").unwrap());
        // A non-subalgebra split is rejected.
        let bad: BTreeSet<usize> = [1, 4].into_iter().collect();
        assert!(matches!(
            coaction(&v1, &bad, 2),
            Err(CoalgError::NotSemidirect(_))
        ));
    }

    #[test]
    fn coaction_is_a_poisson_morphism() {
        let a = shat1();
        let d = ProductDual::single(&a);
        let h: BTreeSet<usize> = [1, 2, 3].into_iter().collect();
        let f = PolyOnDual::parse(&d, "v3*v4^2 - v1*v2").unwrap();
        let g = PolyOnDual::parse(&d, "v5^2 + v2*v3").unwrap();
        let lhs = coaction(&kks_bracket(&f, &g).unwrap(), &h, 2).unwrap();
        let rhs = kks_bracket(
            &coaction(&f, &h, 2).unwrap(),
            &coaction(&g, &h, 2).unwrap(),
        )
        .unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn mixed_prolongation_matches_restricted_coproduct() {
        // Δ^[3] followed by killing the ideal coordinates on copy 3 equals
        // the k = 2, ℓ = 2 mixed prolongation.
        let a = shat1();
        let d = ProductDual::single(&a);
        let h: BTreeSet<usize> = [1, 2, 3].into_iter().collect();
        let c = PolyOnDual::parse(
            &d,
            "2*(v3*v4^2 - v2*v5^2 - v1*v4*v5) - v0*(v1^2 + 4*v2*v3)",
        )
        .unwrap();
        let mixed = mixed_prolong(&c, 2, 2, &h).unwrap();
        let full = coproduct(&c, 3).unwrap();
        // Substitute zeros for v0, v4, v5 on copy 3 of the full coproduct.
        let target = mixed.dual.clone();
        let full_dual = full.dual.clone();
        let images: Vec<MultiPoly> = {
            let mut out = Vec::new();
            for (a_idx, copy) in full_dual.copies.iter().enumerate() {
                for i in copy.indices(full_dual.algebra.dim()) {
                    out.push(match target.var_position(a_idx, i) {
                        Some(p) => MultiPoly::var(target.vars(), p),
                        None => MultiPoly::zero(target.vars()),
                    });
                }
            }
            out
        };
        let restricted = PolyOnDual::from_poly(&target, full.poly.subst(&images));
        assert_eq!(restricted, mixed);
    }

    #[test]
    fn schrodinger_invariant_polynomial() {
        // The mixed prolongation of the Ŝ(1) Casimir pulled back through the
        // plane Hamiltonians is (x3(y1−y2) − y3(x1−x2))².
        let a = shat1();
        let d = ProductDual::single(&a);
        let h: BTreeSet<usize> = [1, 2, 3].into_iter().collect();
        let c = PolyOnDual::parse(
            &d,
            "2*(v3*v4^2 - v2*v5^2 - v1*v4*v5) - v0*(v1^2 + 4*v2*v3)",
        )
        .unwrap();
        let pre = mixed_prolong(&c, 2, 2, &h).unwrap();
        let plane = Chart::new("R2", &["x", "y"], &[], &[]).unwrap();
        let mut w = crate::geometry::DifferentialForm::zero(&plane, 2);
        w.add_term(vec![0, 1], plane.parse("1").unwrap());
        let s = StructurePresentation::Symplectic(w);
        let mut map = BTreeMap::new();
        map.insert(0usize, plane.parse("1").unwrap());
        map.insert(1, plane.parse("x*y").unwrap());
        map.insert(2, plane.parse("1/2*y^2").unwrap());
        map.insert(3, plane.parse("-1/2*x^2").unwrap());
        map.insert(4, plane.parse("y").unwrap());
        map.insert(5, plane.parse("-x").unwrap());
        let phi = MomentumAssignment {
            algebra: a.clone(),
            structure: s,
            map,
        };
        assert!(phi.verify_morphism().unwrap());
        let product = ProductChart::power("E", &plane, 3).unwrap();
        let i1 = pullback(&pre, &[(&phi, Some(0)), (&phi, Some(1)), (&phi, Some(2))], &product).unwrap();
        let expect = product
            .chart
            .parse("(x_(3)*(y_(1)-y_(2)) - y_(3)*(x_(1)-x_(2)))^2")
            .unwrap();
        assert_eq!(i1, expect);
    }

    #[test]
    fn permutation_of_copies() {
        let a = sl2();
        let d = ProductDual::product(&a, vec![CopyKind::Full, CopyKind::Full]);
        let f = PolyOnDual::parse(&d, "e1_(1)*e3_(2) - e2_(1)").unwrap();
        let swapped = permute_copies(&f, &[1, 0]).unwrap();
        assert_eq!(
            swapped,
            PolyOnDual::parse(&d, "e1_(2)*e3_(1) - e2_(2)").unwrap()
        );
        // Identity and double swap.
        assert_eq!(permute_copies(&f, &[0, 1]).unwrap(), f);
        assert_eq!(permute_copies(&swapped, &[1, 0]).unwrap(), f);
    }

    #[test]
    fn pullback_of_linear_element_is_lambda() {
        let a = sl2();
        let d = ProductDual::single(&a);
        let e1 = PolyOnDual::parse(&d, "e1").unwrap();
        let two = coproduct(&e1, 2).unwrap();
        let c = Chart::new("H", &["x", "y"], &[], &["y"]).unwrap();
        let mut w = crate::geometry::DifferentialForm::zero(&c, 2);
        w.add_term(vec![0, 1], c.parse("1/y^3").unwrap());
        let s = StructurePresentation::Symplectic(w);
        let mut map = BTreeMap::new();
        map.insert(0usize, c.parse("-1/(2*y^2)").unwrap());
        map.insert(1, c.parse("-x/y^2").unwrap());
        map.insert(2, c.parse("-x^2/(2*y^2)").unwrap());
        let phi = MomentumAssignment {
            algebra: a.clone(),
            structure: s,
            map,
        };
        assert!(phi.verify_morphism().unwrap());
        let product = ProductChart::power("E", &c, 2).unwrap();
        let p = pullback(&two, &[(&phi, Some(0)), (&phi, Some(1))], &product).unwrap();
        let lam = lambda_of_element(&[&phi, &phi], &product, 0).unwrap();
        assert_eq!(p, lam);
        let _ = qr(1, 2);
    }
}
