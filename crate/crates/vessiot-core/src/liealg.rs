//! Lie algebras of vector fields: closure of generator sets, exact linear
//! independence over ℚ, structure constants, subalgebra/ideal/semidirect
//! verification, Lie symmetries, invariant one-forms, and the sampled
//! injectivity test behind mixed superposition rules.
//!
//! Linear independence is decided over the monomial basis after clearing all
//! coefficients to a common polynomial denominator, so verdicts are exact. A
//! random-point evaluation runs first as a fast prefilter; it can only rule a
//! candidate *in* for the exact solve, never decide dependence by itself.

use std::collections::BTreeMap;

use num::{One, Signed, Zero};
use rand::Rng;

use crate::exprs::{MultiPoly, RatFn, Rational};
use crate::geometry::{Chart, DifferentialForm, GeomError, VectorField};
use crate::linalg::QMat;

use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LieAlgError {
    #[error("closure exceeded the dimension budget of {budget} (no evidence of finite closure)")]
    DimensionBudgetExceeded { budget: usize },
    #[error("bracket left the computed span; closure is inconsistent")]
    NotInSpan,
    #[error("no valid sample point found after {tries} rejections")]
    NoValidSamplePoint { tries: usize },
    #[error(transparent)]
    Geom(#[from] GeomError),
}

pub type LieResult<T> = Result<T, LieAlgError>;

/// A closed finite-dimensional Lie algebra of vector fields with exact
/// structure constants: [X_i, X_j] = Σ_k c_ij^k X_k.
#[derive(Debug, Clone)]
pub struct LieAlgebraOfFields {
    pub chart: Arc<Chart>,
    pub basis: Vec<VectorField>,
    sc: Vec<Vec<Vec<Rational>>>,
}

/// Outcome of a dependency test.
#[derive(Debug, Clone, PartialEq)]
pub enum Dependency {
    Independent,
    /// candidate = Σ coeffs_i · fields_i
    Dependent(Vec<Rational>),
}

/// Exact ℚ-linear dependency of `candidate` on `fields`: coefficients are
/// stacked over (coordinate, monomial) rows after denominator clearing.
pub fn dependency_exact(fields: &[VectorField], candidate: &VectorField) -> Dependency {
    if candidate.is_zero() {
        return Dependency::Dependent(vec![Rational::zero(); fields.len()]);
    }
    if fields.is_empty() {
        return Dependency::Independent;
    }
    let dim = candidate.chart.dim();
    let mut rows: Vec<Vec<Rational>> = Vec::new();
    let mut rhs: Vec<Rational> = Vec::new();
    for coord in 0..dim {
        let mut entries: Vec<RatFn> = fields.iter().map(|f| f.comp(coord).clone()).collect();
        entries.push(candidate.comp(coord).clone());
        let (nums, _den) = RatFn::clear_denominators(&entries);
        // Union of monomials over this coordinate's numerators.
        let mut monomials: BTreeMap<crate::exprs::Monomial, usize> = BTreeMap::new();
        for p in &nums {
            for (m, _) in p.terms() {
                let next = monomials.len();
                monomials.entry(m.clone()).or_insert(next);
            }
        }
        let base = rows.len();
        rows.resize(base + monomials.len(), vec![Rational::zero(); fields.len()]);
        rhs.resize(base + monomials.len(), Rational::zero());
        for (col, p) in nums.iter().enumerate() {
            for (m, c) in p.terms() {
                let r = base + monomials[m];
                if col < fields.len() {
                    rows[r][col] = c.clone();
                } else {
                    rhs[r] = c.clone();
                }
            }
        }
    }
    let a = QMat::from_rows(rows);
    match a.solve(&rhs) {
        Some(coeffs) => Dependency::Dependent(coeffs),
        None => Dependency::Independent,
    }
}

/// Random-evaluation prefilter: evaluates everything at `n_points` exact
/// sample points and solves the stacked system. An infeasible system proves
/// independence; a feasible one only says "dependent-candidate".
pub fn dependency_prefilter<R: Rng>(
    fields: &[VectorField],
    candidate: &VectorField,
    rng: &mut R,
    n_points: usize,
) -> LieResult<Dependency> {
    if fields.is_empty() || candidate.is_zero() {
        return Ok(dependency_exact(fields, candidate));
    }
    let chart = &candidate.chart;
    let mut rows: Vec<Vec<Rational>> = Vec::new();
    let mut rhs: Vec<Rational> = Vec::new();
    let mut collected = 0;
    let mut tries = 0;
    while collected < n_points {
        let point = sample_point(chart, rng, 200)?;
        let mut ok = true;
        let mut point_rows = Vec::new();
        let mut point_rhs = Vec::new();
        for coord in 0..chart.dim() {
            let mut row = Vec::with_capacity(fields.len());
            for f in fields {
                match f.comp(coord).eval_q(&point) {
                    Ok(v) => row.push(v),
                    Err(_) => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                break;
            }
            match candidate.comp(coord).eval_q(&point) {
                Ok(v) => {
                    point_rows.push(row);
                    point_rhs.push(v);
                }
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            rows.extend(point_rows);
            rhs.extend(point_rhs);
            collected += 1;
        } else {
            tries += 1;
            if tries > 500 {
                return Err(LieAlgError::NoValidSamplePoint { tries });
            }
        }
    }
    let a = QMat::from_rows(rows);
    Ok(match a.solve(&rhs) {
        Some(coeffs) => Dependency::Dependent(coeffs), // candidate only
        None => Dependency::Independent,
    })
}

/// Prefiltered dependency: sound fast path, exact fallback.
pub fn dependency<R: Rng>(
    fields: &[VectorField],
    candidate: &VectorField,
    rng: &mut R,
) -> Dependency {
    if let Ok(Dependency::Independent) = dependency_prefilter(fields, candidate, rng, 5) {
        return Dependency::Independent;
    }
    dependency_exact(fields, candidate)
}

/// Random rational sample point on the chart domain: small numerators and
/// denominators, rejection-sampled against the domain constraints.
pub fn sample_point<R: Rng>(
    chart: &Arc<Chart>,
    rng: &mut R,
    max_tries: usize,
) -> LieResult<Vec<Rational>> {
    let nvars = chart.vars().len();
    for _ in 0..max_tries {
        let mut point = Vec::with_capacity(nvars);
        for _ in 0..nvars {
            let num: i64 = rng.gen_range(-20..=20);
            let den: i64 = rng.gen_range(1..=10);
            point.push(crate::exprs::qr(num, den));
        }
        let ok = chart.constraints().iter().all(|c| {
            c.eval_q(&point)
                .map(|v| !v.is_zero())
                .unwrap_or(false)
        });
        if ok {
            return Ok(point);
        }
    }
    Err(LieAlgError::NoValidSamplePoint { tries: max_tries })
}

/// Close a generator set under the Lie bracket, up to `max_dim`.
pub fn closure<R: Rng>(
    generators: &[VectorField],
    max_dim: usize,
    rng: &mut R,
) -> LieResult<LieAlgebraOfFields> {
    assert!(!generators.is_empty(), "closure needs at least one generator");
    let chart = generators[0].chart.clone();
    let mut basis: Vec<VectorField> = Vec::new();
    for g in generators {
        chart.same_as(&g.chart)?;
        if matches!(dependency(&basis, g, rng), Dependency::Independent) {
            basis.push(g.clone());
            if basis.len() > max_dim {
                return Err(LieAlgError::DimensionBudgetExceeded { budget: max_dim });
            }
        }
    }
    // Worklist over unordered pairs; new members re-enter the queue.
    let mut next_pair = (0usize, 1usize);
    while next_pair.0 < basis.len() {
        let (i, j) = next_pair;
        if j >= basis.len() {
            next_pair = (i + 1, i + 2);
            continue;
        }
        let br = basis[i].lie_bracket(&basis[j])?;
        if matches!(dependency(&basis, &br, rng), Dependency::Independent) {
            basis.push(br);
            if basis.len() > max_dim {
                return Err(LieAlgError::DimensionBudgetExceeded { budget: max_dim });
            }
        }
        next_pair = (i, j + 1);
    }
    LieAlgebraOfFields::from_basis(chart, basis)
}

impl LieAlgebraOfFields {
    /// Assemble the structure-constant table for an already independent
    /// basis; fails with `NotInSpan` if a bracket leaves the span.
    pub fn from_basis(chart: Arc<Chart>, basis: Vec<VectorField>) -> LieResult<Self> {
        let n = basis.len();
        let mut sc = vec![vec![vec![Rational::zero(); n]; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let br = basis[i].lie_bracket(&basis[j])?;
                let coeffs = match dependency_exact(&basis, &br) {
                    Dependency::Dependent(c) => c,
                    Dependency::Independent => return Err(LieAlgError::NotInSpan),
                };
                for k in 0..n {
                    sc[i][j][k] = coeffs[k].clone();
                    sc[j][i][k] = -coeffs[k].clone();
                }
            }
        }
        let alg = LieAlgebraOfFields { chart, basis, sc };
        debug_assert!(alg.jacobi_holds());
        Ok(alg)
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Exact expansion coefficients of [X_i, X_j] in the basis.
    pub fn structure_constants(&self, i: usize, j: usize) -> &[Rational] {
        &self.sc[i][j]
    }

    /// Bracket of two coefficient vectors through the structure constants.
    pub fn bracket_vec(&self, u: &[Rational], v: &[Rational]) -> Vec<Rational> {
        let n = self.dim();
        let mut out = vec![Rational::zero(); n];
        for i in 0..n {
            if u[i].is_zero() {
                continue;
            }
            for j in 0..n {
                if v[j].is_zero() {
                    continue;
                }
                for k in 0..n {
                    let c = &self.sc[i][j][k];
                    if !c.is_zero() {
                        out[k] += &u[i] * &v[j] * c;
                    }
                }
            }
        }
        out
    }

    /// Antisymmetry + Jacobi identity on the structure constants.
    pub fn jacobi_holds(&self) -> bool {
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if self.sc[i][j][k] != -self.sc[j][i][k].clone() {
                        return false;
                    }
                }
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let mut total = vec![Rational::zero(); n];
                    for (a, b, c) in [(i, j, k), (j, k, i), (k, i, j)] {
                        // [[X_a, X_b], X_c]
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
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Realize a coefficient vector as a vector field.
    pub fn field_from_vec(&self, v: &[Rational]) -> VectorField {
        let mut acc = VectorField::zero(&self.chart);
        for (i, c) in v.iter().enumerate() {
            if !c.is_zero() {
                acc = acc.add(&self.basis[i].scale(c)).expect("same chart");
            }
        }
        acc
    }

    fn in_span(subset: &[Vec<Rational>], v: &[Rational]) -> bool {
        let n = v.len();
        let cols = subset.len();
        let mut rows = Vec::with_capacity(n);
        for r in 0..n {
            let mut row = Vec::with_capacity(cols);
            for s in subset {
                row.push(s[r].clone());
            }
            rows.push(row);
        }
        QMat::from_rows(rows).solve(v).is_some()
    }

    /// Is the span of the given coefficient vectors closed under the bracket?
    pub fn check_subalgebra(&self, subset: &[Vec<Rational>]) -> bool {
        for a in subset {
            for b in subset {
                if !Self::in_span(subset, &self.bracket_vec(a, b)) {
                    return false;
                }
            }
        }
        true
    }

    /// Is the span an ideal: [𝔤, subset] ⊂ subset?
    pub fn check_ideal(&self, subset: &[Vec<Rational>]) -> bool {
        let n = self.dim();
        for i in 0..n {
            let mut e = vec![Rational::zero(); n];
            e[i] = Rational::one();
            for s in subset {
                if !Self::in_span(subset, &self.bracket_vec(&e, s)) {
                    return false;
                }
            }
        }
        true
    }

    /// Semidirect-sum report: part1 a subalgebra, part2 an ideal, and the two
    /// spanning the algebra as a vector-space direct sum.
    pub fn check_semidirect(
        &self,
        part1: &[Vec<Rational>],
        part2: &[Vec<Rational>],
    ) -> SemidirectReport {
        let subalgebra = self.check_subalgebra(part1);
        let ideal = self.check_ideal(part2);
        let mut all: Vec<Vec<Rational>> = part1.to_vec();
        all.extend(part2.to_vec());
        let rank = QMat::from_rows(all.clone()).rank();
        let direct_sum = rank == part1.len() + part2.len() && rank == self.dim();
        SemidirectReport {
            part1_subalgebra: subalgebra,
            part2_ideal: ideal,
            direct_sum,
        }
    }

    /// dim V = dim M and the basis wedge is a nonzero rational function.
    pub fn is_locally_automorphic(&self) -> LieResult<bool> {
        if self.dim() != self.chart.dim() {
            return Ok(false);
        }
        Ok(!crate::geometry::wedge_volume(&self.basis)?.is_zero())
    }

    /// [Y, Z] = 0 for every basis Y, per candidate Z.
    pub fn check_symmetries(&self, candidates: &[VectorField]) -> LieResult<Vec<bool>> {
        let mut out = Vec::with_capacity(candidates.len());
        for z in candidates {
            let mut ok = true;
            for y in &self.basis {
                if !y.lie_bracket(z)?.is_zero() {
                    ok = false;
                    break;
                }
            }
            out.push(ok);
        }
        Ok(out)
    }

    /// Rank of the evaluated basis equals the dimension at `samples` points:
    /// the sampled modularity check.
    pub fn modular_at_samples<R: Rng>(&self, samples: usize, rng: &mut R) -> LieResult<bool> {
        for _ in 0..samples {
            let p = self.sample_regular_point(rng)?;
            let mut rows = Vec::new();
            for f in &self.basis {
                rows.push(f.eval_q(&p).expect("regular point"));
            }
            if QMat::from_rows(rows).rank() != self.dim() {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Sample a chart point where every basis coefficient is finite.
    fn sample_regular_point<R: Rng>(&self, rng: &mut R) -> LieResult<Vec<Rational>> {
        for _ in 0..200 {
            let p = sample_point(&self.chart, rng, 200)?;
            let ok = self
                .basis
                .iter()
                .all(|f| f.comps().iter().all(|c| c.eval_q(&p).is_ok()));
            if ok {
                return Ok(p);
            }
        }
        Err(LieAlgError::NoValidSamplePoint { tries: 200 })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemidirectReport {
    pub part1_subalgebra: bool,
    pub part2_ideal: bool,
    pub direct_sum: bool,
}

impl SemidirectReport {
    pub fn confirmed(&self) -> bool {
        self.part1_subalgebra && self.part2_ideal && self.direct_sum
    }
}

/// Solve L_X(Σ c_i α_i) = 0 for all `extra_fields` X over c ∈ ℚ^n: expand in
/// coordinate one-forms, clear denominators, match monomials, exact
/// nullspace. Returns the canonical (RREF) basis of the solution space.
pub fn invariant_one_forms(
    frame: &[DifferentialForm],
    extra_fields: &[VectorField],
) -> LieResult<Vec<Vec<Rational>>> {
    let n = frame.len();
    if extra_fields.is_empty() {
        // Full space: identity basis.
        let mut basis = Vec::new();
        for i in 0..n {
            let mut v = vec![Rational::zero(); n];
            v[i] = Rational::one();
            basis.push(v);
        }
        return Ok(basis);
    }
    let chart = frame[0].chart.clone();
    let mut rows: Vec<Vec<Rational>> = Vec::new();
    for x in extra_fields {
        // Coefficient of dx^c in L_X α_i, for each i.
        let mut derivs: Vec<Vec<RatFn>> = Vec::with_capacity(n);
        for a in frame {
            let la = a.lie_derivative(x)?;
            derivs.push((0..chart.dim()).map(|c| la.coeff(&[c as u8])).collect());
        }
        for c in 0..chart.dim() {
            let entries: Vec<RatFn> = derivs.iter().map(|d| d[c].clone()).collect();
            if entries.iter().all(RatFn::is_zero) {
                continue;
            }
            let (nums, _den) = RatFn::clear_denominators(&entries);
            let mut monomials: BTreeMap<crate::exprs::Monomial, usize> = BTreeMap::new();
            for p in &nums {
                for (m, _) in p.terms() {
                    let next = monomials.len();
                    monomials.entry(m.clone()).or_insert(next);
                }
            }
            let base = rows.len();
            rows.resize(base + monomials.len(), vec![Rational::zero(); n]);
            for (i, p) in nums.iter().enumerate() {
                for (m, coeff) in p.terms() {
                    rows[base + monomials[m]][i] = coeff.clone();
                }
            }
        }
    }
    if rows.is_empty() {
        return invariant_one_forms(frame, &[]);
    }
    let basis = QMat::from_rows(rows).nullspace();
    Ok(crate::linalg::rref_rows(&basis))
}

/// Verdict of the sampled injectivity test.
#[derive(Debug, Clone, PartialEq)]
pub enum InjectivityVerdict {
    /// Rank was preserved at every sampled point.
    InjectiveAtSamples { samples: usize },
    /// A point where deleting the block's rows drops the rank.
    Counterexample {
        point: Vec<Rational>,
        rank_full: usize,
        rank_dropped: usize,
    },
}

/// At each sample point, compare the rank of the evaluated basis matrix with
/// the rank after deleting the coordinate rows `drop`: the projection away
/// from those coordinates is injective on the evaluated distribution iff the
/// ranks agree.
pub fn injectivity_test<R: Rng>(
    algebra: &LieAlgebraOfFields,
    drop: &[usize],
    samples: usize,
    rng: &mut R,
) -> LieResult<InjectivityVerdict> {
    for _ in 0..samples {
        let p = algebra.sample_regular_point(rng)?;
        let mut full_rows = Vec::new();
        let mut dropped_rows = Vec::new();
        for f in &algebra.basis {
            let vals = f.eval_q(&p).expect("regular point");
            let kept: Vec<Rational> = vals
                .iter()
                .enumerate()
                .filter(|(i, _)| !drop.contains(i))
                .map(|(_, v)| v.clone())
                .collect();
            full_rows.push(vals);
            dropped_rows.push(kept);
        }
        let rank_full = QMat::from_rows(full_rows).rank();
        let rank_dropped = QMat::from_rows(dropped_rows).rank();
        if rank_dropped < rank_full {
            return Ok(InjectivityVerdict::Counterexample {
                point: p,
                rank_full,
                rank_dropped,
            });
        }
    }
    Ok(InjectivityVerdict::InjectiveAtSamples { samples })
}

/// Exact check X_i(I) = 0 for every generator, per candidate invariant.
pub fn verify_constants(generators: &[VectorField], candidates: &[RatFn]) -> Vec<bool> {
    candidates
        .iter()
        .map(|inv| generators.iter().all(|x| x.apply_is_zero(inv)))
        .collect()
}

#[allow(dead_code)]
fn poly_is_zero(p: &MultiPoly) -> bool {
    p.is_zero()
}

#[allow(dead_code)]
fn abs(q: &Rational) -> Rational {
    q.abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprs::q;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn riccati_fields() -> (Arc<Chart>, Vec<VectorField>) {
        let m = Chart::new("M", &["x", "y", "z"], &[], &["y*z"]).unwrap();
        let x1 = VectorField::parse(&m, &["4*x^2", "4*x*y", "-4*x*z"]).unwrap();
        let x2 = VectorField::parse(&m, &["-1", "0", "0"]).unwrap();
        let x3 = VectorField::parse(&m, &["2*x", "y", "0"]).unwrap();
        let x4 = VectorField::parse(&m, &["0", "0", "-2*z"]).unwrap();
        (m, vec![x1, x2, x3, x4])
    }

    #[test]
    fn riccati_closure_dim_4_with_table() {
        let (_, gens) = riccati_fields();
        let alg = closure(&gens, 64, &mut rng()).unwrap();
        assert_eq!(alg.dim(), 4);
        // [X1, X2] = 4 X3 + 2 X4
        assert_eq!(
            alg.structure_constants(0, 1),
            &[q(0), q(0), q(4), q(2)][..]
        );
        // [X1, X3] = -2 X1
        assert_eq!(
            alg.structure_constants(0, 2),
            &[q(-2), q(0), q(0), q(0)][..]
        );
        // [X2, X3] = 2 X2
        assert_eq!(alg.structure_constants(1, 2), &[q(0), q(2), q(0), q(0)][..]);
        assert!(alg.jacobi_holds());
    }

    #[test]
    fn closure_is_idempotent() {
        let (_, gens) = riccati_fields();
        let alg = closure(&gens, 64, &mut rng()).unwrap();
        let again = closure(&alg.basis, 64, &mut rng()).unwrap();
        assert_eq!(alg.dim(), again.dim());
    }

    #[test]
    fn single_translation_field() {
        let m = Chart::new("R", &["x"], &[], &[]).unwrap();
        let dx = VectorField::parse(&m, &["1"]).unwrap();
        let alg = closure(&[dx], 8, &mut rng()).unwrap();
        assert_eq!(alg.dim(), 1);
        assert!(alg.structure_constants(0, 0).iter().all(Rational::is_zero));
    }

    #[test]
    fn dependency_finds_exact_combination() {
        let (_, gens) = riccati_fields();
        // 4 X3 + 2 X4 against {X3, X4}
        let target = gens[2].scale(&q(4)).add(&gens[3].scale(&q(2))).unwrap();
        match dependency_exact(&gens[2..4], &target) {
            Dependency::Dependent(c) => assert_eq!(c, vec![q(4), q(2)]),
            _ => panic!("expected dependence"),
        }
        // X1 is independent of the others.
        assert_eq!(
            dependency_exact(&gens[1..], &gens[0]),
            Dependency::Independent
        );
        // Zero field is trivially dependent.
        let zero = VectorField::zero(&gens[0].chart);
        assert!(matches!(
            dependency_exact(&gens[..2], &zero),
            Dependency::Dependent(_)
        ));
    }

    #[test]
    fn prefilter_agrees_with_exact() {
        let (_, gens) = riccati_fields();
        let mut r = rng();
        for cand in &gens {
            let exact = dependency_exact(&gens[1..3], cand);
            let pre = dependency_prefilter(&gens[1..3], cand, &mut r, 5).unwrap();
            match (exact, pre) {
                (Dependency::Independent, Dependency::Independent) => {}
                (Dependency::Dependent(_), Dependency::Dependent(_)) => {}
                // The prefilter may say "dependent-candidate" when the exact
                // verdict is independent, never the converse.
                (Dependency::Independent, Dependency::Dependent(_)) => {}
                (Dependency::Dependent(_), Dependency::Independent) => {
                    panic!("prefilter claimed independence for a dependent candidate")
                }
            }
        }
    }

    #[test]
    fn riccati_locally_automorphic_subalgebra() {
        let (m, gens) = riccati_fields();
        // V' = {Y2, Y3, Y4}
        let y2 = gens[1].clone();
        let y3 = gens[2].add(&gens[3].scale(&crate::exprs::qr(1, 2))).unwrap();
        let y4 = gens[3].clone();
        let vprime = LieAlgebraOfFields::from_basis(m.clone(), vec![y2, y3, y4]).unwrap();
        assert!(vprime.is_locally_automorphic().unwrap());
        // Full V is 4-dimensional on a 3-dimensional chart.
        let v = closure(&gens, 64, &mut rng()).unwrap();
        assert!(!v.is_locally_automorphic().unwrap());
        // Coordinate frame on the plane.
        let c = Chart::new("R2", &["x", "y"], &[], &[]).unwrap();
        let fx = VectorField::parse(&c, &["1", "0"]).unwrap();
        let fy = VectorField::parse(&c, &["0", "1"]).unwrap();
        let ab = LieAlgebraOfFields::from_basis(c, vec![fx, fy]).unwrap();
        assert!(ab.is_locally_automorphic().unwrap());
    }

    #[test]
    fn riccati_symmetries() {
        let (m, gens) = riccati_fields();
        let y2 = gens[1].clone();
        let y3 = gens[2].add(&gens[3].scale(&crate::exprs::qr(1, 2))).unwrap();
        let y4 = gens[3].clone();
        let vprime = LieAlgebraOfFields::from_basis(m.clone(), vec![y2, y3, y4]).unwrap();
        let z1 = VectorField::parse(&m, &["y^2", "0", "0"]).unwrap();
        let z2 = VectorField::parse(&m, &["0", "y", "0"]).unwrap();
        let z3 = VectorField::parse(&m, &["0", "0", "z"]).unwrap();
        assert_eq!(
            vprime.check_symmetries(&[z1, z2, z3]).unwrap(),
            vec![true, true, true]
        );
        // X1 is not a symmetry of the abelian algebra {∂x}.
        let line = Chart::new("R", &["x"], &[], &[]).unwrap();
        let dx = VectorField::parse(&line, &["1"]).unwrap();
        let quad = VectorField::parse(&line, &["4*x^2"]).unwrap();
        let ab = LieAlgebraOfFields::from_basis(line, vec![dx]).unwrap();
        assert_eq!(ab.check_symmetries(&[quad]).unwrap(), vec![false]);
    }

    #[test]
    fn riccati_invariant_forms() {
        let (m, gens) = riccati_fields();
        let z1 = VectorField::parse(&m, &["y^2", "0", "0"]).unwrap();
        let z2 = VectorField::parse(&m, &["0", "y", "0"]).unwrap();
        let z3 = VectorField::parse(&m, &["0", "0", "z"]).unwrap();
        let frame = crate::geometry::dual_frame(&[z1, z2, z3]).unwrap();
        // Constraint from Y1 = X1 forces c3 = c2: solution space {α1, α2+α3}.
        let basis = invariant_one_forms(&frame, &[gens[0].clone()]).unwrap();
        let expect = crate::linalg::rref_rows(&[
            vec![q(1), q(0), q(0)],
            vec![q(0), q(1), q(1)],
        ]);
        assert_eq!(basis, expect);
        // No extra fields: full space.
        let full = invariant_one_forms(&frame, &[]).unwrap();
        assert_eq!(full.len(), 3);
    }

    #[test]
    fn verify_constant_functions() {
        let (m, gens) = riccati_fields();
        let one = m.parse("7").unwrap();
        assert_eq!(verify_constants(&gens, &[one]), vec![true]);
        let x = m.parse("x").unwrap();
        assert_eq!(verify_constants(&gens, &[x]), vec![false]);
    }
}
