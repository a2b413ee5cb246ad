//! Hamiltonian machinery for the geometric presentations used by Lie
//! systems: symplectic and presymplectic two-forms (Dirac graphs), contact
//! one-forms (Reeb fields, contact Hamiltonians, Liouville property),
//! Poisson bivectors, and the Jacobi pair induced by a contact form.
//!
//! Sign conventions, fixed once and used everywhere:
//!   ι_X ω = dh          (symplectic / presymplectic Hamiltonian fields)
//!   {f, g} = −X_f g     (equivalently Λ(df, dg) for the bivector)
//!   ι_X η = −h,  ι_X dη = dh − (ℛh) η      (contact Hamiltonians)
//!   Jacobi pair from a contact form: E = −ℛ and Λ♯(α) = (ι_ℛ α) ℛ − ♯α,
//!   with ♭(v) = ι_v dη + (ι_v η) η and ♯ = ♭⁻¹; under these choices
//!   {f, g} = Λ(df, dg) agrees with the dη-presymplectic bracket, the
//!   Hamiltonian field of an admissible f is X_f = f E − Λ♯(df), and
//!   [Λ, Λ] = 2 E ∧ Λ, [E, Λ] = 0 hold exactly.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::exprs::RatFn;
use crate::geometry::{Chart, DifferentialForm, GeomError, VectorField};
use crate::linalg::{bareiss, rf_det, rf_nullspace, rf_solve};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StructError {
    #[error("structure is singular (degenerate over the rational-function field)")]
    SingularStructure,
    #[error("one-form is not contact: {0}")]
    NotContact(String),
    #[error("function is not admissible for this structure")]
    NotAdmissible,
    #[error("cannot combine presentations with different tags")]
    MixedTags,
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

pub type StructResult<T> = Result<T, StructError>;

// ---------------------------------------------------------------------------
// Bivectors and trivectors
// ---------------------------------------------------------------------------

/// An antisymmetric bivector Λ = Σ_{i<j} Λ^{ij} ∂_i ∧ ∂_j.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bivector {
    pub chart: Arc<Chart>,
    terms: BTreeMap<(u8, u8), RatFn>,
}

impl Bivector {
    pub fn zero(chart: &Arc<Chart>) -> Self {
        Bivector {
            chart: chart.clone(),
            terms: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, i: usize, j: usize, c: RatFn) {
        assert!(i != j, "diagonal bivector entry");
        let (a, b, c) = if i < j {
            (i as u8, j as u8, c)
        } else {
            (j as u8, i as u8, c.neg())
        };
        if c.is_zero() {
            self.terms.remove(&(a, b));
        } else {
            self.terms.insert((a, b), c);
        }
    }

    /// Signed component Λ^{ij}.
    pub fn coeff(&self, i: usize, j: usize) -> RatFn {
        let vars = self.chart.vars();
        if i == j {
            return RatFn::zero(vars);
        }
        if i < j {
            self.terms
                .get(&(i as u8, j as u8))
                .cloned()
                .unwrap_or_else(|| RatFn::zero(vars))
        } else {
            self.coeff(j, i).neg()
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&(u8, u8), &RatFn)> {
        self.terms.iter()
    }

    /// Λ(df, dg) = Σ_{ij} Λ^{ij} ∂_i f ∂_j g.
    pub fn bracket(&self, f: &RatFn, g: &RatFn) -> RatFn {
        let vars = self.chart.vars();
        let mut acc = RatFn::zero(vars);
        for (&(i, j), c) in &self.terms {
            let (i, j) = (i as usize, j as usize);
            let term = f.diff(i).mul(&g.diff(j)).sub(&f.diff(j).mul(&g.diff(i)));
            acc = acc.add(&c.mul(&term));
        }
        acc
    }

    /// Λ♯(α)^j = Σ_i α_i Λ^{ij}, so that Λ♯(df) g = Λ(df, dg).
    pub fn sharp(&self, alpha: &DifferentialForm) -> StructResult<VectorField> {
        if alpha.degree != 1 {
            return Err(StructError::Invalid("sharp needs a one-form".into()));
        }
        let n = self.chart.dim();
        let vars = self.chart.vars();
        let mut comps = vec![RatFn::zero(vars); n];
        for (j, comp) in comps.iter_mut().enumerate() {
            let mut acc = RatFn::zero(vars);
            for i in 0..n {
                let l = self.coeff(i, j);
                if !l.is_zero() {
                    let a = alpha.coeff(&[i as u8]);
                    if !a.is_zero() {
                        acc = acc.add(&a.mul(&l));
                    }
                }
            }
            *comp = acc;
        }
        Ok(VectorField::new(&self.chart, comps))
    }

    /// The Schouten square [Λ, Λ] as a trivector (classical convention):
    /// [Λ,Λ]^{ijk} = 2 Σ_l (Λ^{il} ∂_l Λ^{jk} + Λ^{jl} ∂_l Λ^{ki} + Λ^{kl} ∂_l Λ^{ij}).
    pub fn schouten_square(&self) -> Trivector {
        let n = self.chart.dim();
        let vars = self.chart.vars();
        let mut out = Trivector::zero(&self.chart);
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let mut acc = RatFn::zero(vars);
                    for l in 0..n {
                        for (a, b, c) in [(i, j, k), (j, k, i), (k, i, j)] {
                            let lam = self.coeff(a, l);
                            if lam.is_zero() {
                                continue;
                            }
                            let target = self.coeff(b, c);
                            let d = target.diff(l);
                            if !d.is_zero() {
                                acc = acc.add(&lam.mul(&d));
                            }
                        }
                    }
                    out.set(i, j, k, acc.scale(&crate::exprs::q(2)));
                }
            }
        }
        out
    }

    /// Lie derivative [E, Λ] along a vector field:
    /// (L_E Λ)^{ij} = Σ_l (E^l ∂_l Λ^{ij} − Λ^{lj} ∂_l E^i − Λ^{il} ∂_l E^j).
    pub fn lie_along(&self, e: &VectorField) -> Bivector {
        let n = self.chart.dim();
        let vars = self.chart.vars();
        let mut out = Bivector::zero(&self.chart);
        for i in 0..n {
            for j in i + 1..n {
                let mut acc = RatFn::zero(vars);
                let lam = self.coeff(i, j);
                for l in 0..n {
                    let el = e.comp(l);
                    if !el.is_zero() {
                        let d = lam.diff(l);
                        if !d.is_zero() {
                            acc = acc.add(&el.mul(&d));
                        }
                    }
                    let l_lj = self.coeff(l, j);
                    if !l_lj.is_zero() {
                        let d = e.comp(i).diff(l);
                        if !d.is_zero() {
                            acc = acc.sub(&l_lj.mul(&d));
                        }
                    }
                    let l_il = self.coeff(i, l);
                    if !l_il.is_zero() {
                        let d = e.comp(j).diff(l);
                        if !d.is_zero() {
                            acc = acc.sub(&l_il.mul(&d));
                        }
                    }
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    /// E ∧ Λ as a trivector: (E∧Λ)^{ijk} = E^i Λ^{jk} − E^j Λ^{ik} + E^k Λ^{ij}.
    pub fn wedge_field(&self, e: &VectorField) -> Trivector {
        let n = self.chart.dim();
        let mut out = Trivector::zero(&self.chart);
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let v = e
                        .comp(i)
                        .mul(&self.coeff(j, k))
                        .sub(&e.comp(j).mul(&self.coeff(i, k)))
                        .add(&e.comp(k).mul(&self.coeff(i, j)));
                    out.set(i, j, k, v);
                }
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Antisymmetric trivector, stored over strictly increasing index triples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trivector {
    pub chart: Arc<Chart>,
    terms: BTreeMap<(u8, u8, u8), RatFn>,
}

impl Trivector {
    pub fn zero(chart: &Arc<Chart>) -> Self {
        Trivector {
            chart: chart.clone(),
            terms: BTreeMap::new(),
        }
    }

    fn set(&mut self, i: usize, j: usize, k: usize, c: RatFn) {
        if c.is_zero() {
            self.terms.remove(&(i as u8, j as u8, k as u8));
        } else {
            self.terms.insert((i as u8, j as u8, k as u8), c);
        }
    }

    fn scale2(&self) -> Trivector {
        let mut out = self.clone();
        for (_, c) in out.terms.iter_mut() {
            *c = c.scale(&crate::exprs::q(2));
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Structure presentations
// ---------------------------------------------------------------------------

/// A geometric structure presented as the graph data it is built from.
#[derive(Debug, Clone)]
pub enum StructurePresentation {
    Symplectic(DifferentialForm),
    Presymplectic(DifferentialForm),
    Contact(DifferentialForm),
    PoissonBivector(Bivector),
    Jacobi { lambda: Bivector, e: VectorField },
}

impl StructurePresentation {
    pub fn chart(&self) -> &Arc<Chart> {
        match self {
            StructurePresentation::Symplectic(w)
            | StructurePresentation::Presymplectic(w)
            | StructurePresentation::Contact(w) => &w.chart,
            StructurePresentation::PoissonBivector(l) => &l.chart,
            StructurePresentation::Jacobi { lambda, .. } => &lambda.chart,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            StructurePresentation::Symplectic(_) => "symplectic",
            StructurePresentation::Presymplectic(_) => "presymplectic",
            StructurePresentation::Contact(_) => "contact",
            StructurePresentation::PoissonBivector(_) => "bivector",
            StructurePresentation::Jacobi { .. } => "jacobi",
        }
    }

    /// Verify the defining conditions of the presentation, exactly.
    pub fn validate(&self) -> StructResult<()> {
        match self {
            StructurePresentation::Symplectic(w) => {
                if w.degree != 2 {
                    return Err(StructError::Invalid(
                        "symplectic form must have degree 2".into(),
                    ));
                }
                if !w.exterior_derivative().is_zero() {
                    return Err(StructError::Invalid("symplectic form is not closed".into()));
                }
                let a = two_form_matrix(w);
                if rf_det(&a, w.chart.vars()).is_zero() {
                    return Err(StructError::SingularStructure);
                }
                Ok(())
            }
            StructurePresentation::Presymplectic(w) => {
                if w.degree != 2 {
                    return Err(StructError::Invalid(
                        "presymplectic form must have degree 2".into(),
                    ));
                }
                if !w.exterior_derivative().is_zero() {
                    return Err(StructError::Invalid(
                        "presymplectic form is not closed".into(),
                    ));
                }
                Ok(())
            }
            StructurePresentation::Contact(eta) => {
                contact_volume(eta)?;
                Ok(())
            }
            StructurePresentation::PoissonBivector(l) => {
                if !l.schouten_square().is_zero() {
                    return Err(StructError::Invalid(
                        "bivector does not satisfy [Λ,Λ] = 0".into(),
                    ));
                }
                Ok(())
            }
            StructurePresentation::Jacobi { lambda, e } => {
                if lambda.schouten_square() != lambda.wedge_field(e).scale2() {
                    return Err(StructError::Invalid("[Λ,Λ] = 2E∧Λ fails".into()));
                }
                if !lambda.lie_along(e).is_zero() {
                    return Err(StructError::Invalid("[E,Λ] = 0 fails".into()));
                }
                Ok(())
            }
        }
    }
}

/// Component matrix A of a two-form: (ι_v ω)_j = Σ_i v^i A_{ij}.
fn two_form_matrix(w: &DifferentialForm) -> Vec<Vec<RatFn>> {
    let n = w.chart.dim();
    let vars = w.chart.vars();
    let mut a = vec![vec![RatFn::zero(vars); n]; n];
    for (idx, c) in w.terms() {
        let (i, j) = (idx[0] as usize, idx[1] as usize);
        a[i][j] = c.clone();
        a[j][i] = c.neg();
    }
    a
}

/// η ∧ (dη)^n for a one-form on a (2n+1)-dimensional chart; errors when the
/// dimension is even or the result vanishes identically.
pub fn contact_volume(eta: &DifferentialForm) -> StructResult<RatFn> {
    if eta.degree != 1 {
        return Err(StructError::NotContact("not a one-form".into()));
    }
    let dim = eta.chart.dim();
    if dim % 2 == 0 {
        return Err(StructError::NotContact(format!(
            "chart dimension {dim} is even"
        )));
    }
    let n = (dim - 1) / 2;
    let deta = eta.exterior_derivative();
    let mut vol = eta.clone();
    for _ in 0..n {
        vol = vol.wedge(&deta)?;
    }
    let idx: Vec<u8> = (0..dim as u8).collect();
    let c = vol.coeff(&idx);
    if c.is_zero() {
        return Err(StructError::NotContact("η ∧ (dη)^n vanishes".into()));
    }
    Ok(c)
}

// ---------------------------------------------------------------------------
// Hamiltonian solvers and brackets
// ---------------------------------------------------------------------------

/// Unique exact solution X of ι_X ω = dh for a symplectic ω.
pub fn hamiltonian_field_symplectic(w: &DifferentialForm, h: &RatFn) -> StructResult<VectorField> {
    let chart = &w.chart;
    let n = chart.dim();
    let a = two_form_matrix(w);
    // Equations indexed by j: Σ_i A_{ij} X^i = ∂_j h.
    let mut rows = vec![vec![RatFn::zero(chart.vars()); n]; n];
    for (j, row) in rows.iter_mut().enumerate() {
        for (i, entry) in row.iter_mut().enumerate() {
            *entry = a[i][j].clone();
        }
    }
    let rhs: Vec<Vec<RatFn>> = (0..n).map(|j| vec![h.diff(j)]).collect();
    let ech = bareiss(&rows, &rhs, chart.vars());
    if ech.rank < n {
        return Err(StructError::SingularStructure);
    }
    let x = ech.solve_column(0).ok_or(StructError::SingularStructure)?;
    Ok(VectorField::new(chart, x))
}

/// Exact Gaussian elimination on ι_X ω = dh for a closed (possibly
/// degenerate) ω: one particular solution with free variables set to zero,
/// plus a basis of ker ω. `NotAdmissible` when the system is inconsistent.
pub fn presymplectic_hamiltonian(
    w: &DifferentialForm,
    h: &RatFn,
) -> StructResult<(VectorField, Vec<VectorField>)> {
    let chart = &w.chart;
    let n = chart.dim();
    let a = two_form_matrix(w);
    let mut rows = vec![vec![RatFn::zero(chart.vars()); n]; n];
    for (j, row) in rows.iter_mut().enumerate() {
        for (i, entry) in row.iter_mut().enumerate() {
            *entry = a[i][j].clone();
        }
    }
    let rhs: Vec<RatFn> = (0..n).map(|j| h.diff(j)).collect();
    let x = rf_solve(&rows, &rhs, chart.vars()).ok_or(StructError::NotAdmissible)?;
    let kernel = rf_nullspace(&rows, chart.vars())
        .into_iter()
        .map(|comps| VectorField::new(chart, comps))
        .collect();
    Ok((VectorField::new(chart, x), kernel))
}

/// Poisson bracket of two admissible functions under a presentation.
pub fn poisson_bracket(s: &StructurePresentation, f: &RatFn, g: &RatFn) -> StructResult<RatFn> {
    match s {
        StructurePresentation::Symplectic(w) => {
            let xf = hamiltonian_field_symplectic(w, f)?;
            Ok(xf.apply(g).neg())
        }
        StructurePresentation::Presymplectic(w) => {
            let (xf, _) = presymplectic_hamiltonian(w, f)?;
            Ok(xf.apply(g).neg())
        }
        StructurePresentation::Contact(eta) => {
            // Liouville-type admissibility: ℛf = 0; bracket through ω = dη.
            let r = reeb_field(eta)?;
            if !r.apply_is_zero(f) || !r.apply_is_zero(g) {
                return Err(StructError::NotAdmissible);
            }
            let w = eta.exterior_derivative();
            let (xf, _) = presymplectic_hamiltonian(&w, f)?;
            Ok(xf.apply(g).neg())
        }
        StructurePresentation::PoissonBivector(l) => Ok(l.bracket(f, g)),
        StructurePresentation::Jacobi { lambda, e } => {
            if !e.apply_is_zero(f) || !e.apply_is_zero(g) {
                return Err(StructError::NotAdmissible);
            }
            Ok(lambda.bracket(f, g))
        }
    }
}

/// The Reeb field of a contact form: the unique solution of ι_ℛ η = 1,
/// ι_ℛ dη = 0.
pub fn reeb_field(eta: &DifferentialForm) -> StructResult<VectorField> {
    contact_volume(eta)?;
    let chart = &eta.chart;
    let n = chart.dim();
    let vars = chart.vars();
    let deta = eta.exterior_derivative();
    let a = two_form_matrix(&deta);
    // n+1 equations: pairing with η equals 1, contraction with dη vanishes.
    let mut rows = Vec::with_capacity(n + 1);
    let mut rhs = Vec::with_capacity(n + 1);
    rows.push((0..n).map(|i| eta.coeff(&[i as u8])).collect::<Vec<_>>());
    rhs.push(RatFn::one(vars));
    for j in 0..n {
        rows.push((0..n).map(|i| a[i][j].clone()).collect());
        rhs.push(RatFn::zero(vars));
    }
    let sol = rf_solve(&rows, &rhs, vars)
        .ok_or_else(|| StructError::NotContact("Reeb system inconsistent".into()))?;
    if !rf_nullspace(&rows, vars).is_empty() {
        return Err(StructError::NotContact("Reeb field not unique".into()));
    }
    Ok(VectorField::new(chart, sol))
}

/// Exact verification of ι_X η = −h and ι_X dη = dh − (ℛh) η.
pub fn contact_hamiltonian_check(
    eta: &DifferentialForm,
    x: &VectorField,
    h: &RatFn,
) -> StructResult<bool> {
    let r = reeb_field(eta)?;
    let pairing = eta.pair(x)?;
    if !pairing.add(h).is_zero() {
        return Ok(false);
    }
    let deta = eta.exterior_derivative();
    let lhs = deta.interior(x)?;
    let dh = DifferentialForm::one_form(
        &eta.chart,
        (0..eta.chart.dim()).map(|i| h.diff(i)).collect(),
    );
    let rh = r.apply(h);
    let rhs = dh.sub(&eta.scale_rf(&rh))?;
    Ok(lhs == rhs)
}

/// Liouville property: every Hamiltonian is a constant of motion of the Reeb
/// field.
pub fn contact_liouville_check(eta: &DifferentialForm, hs: &[RatFn]) -> StructResult<bool> {
    let r = reeb_field(eta)?;
    Ok(hs.iter().all(|h| r.apply_is_zero(h)))
}

/// The Jacobi pair (Λ, E) induced by a contact form: E = −ℛ and Λ assembled
/// from the inverse of ♭(v) = ι_v dη + (ι_v η) η as Λ^{ij} = ℛ^i ℛ^j − (♭⁻¹)_{ij}.
pub fn jacobi_from_contact(eta: &DifferentialForm) -> StructResult<(Bivector, VectorField)> {
    contact_volume(eta)?;
    let chart = &eta.chart;
    let n = chart.dim();
    let vars = chart.vars();
    let r = reeb_field(eta)?;
    let deta = eta.exterior_derivative();
    let a = two_form_matrix(&deta);
    // M_{ij} = (dη)_{ij} + η_i η_j
    let mut m = vec![vec![RatFn::zero(vars); n]; n];
    for (i, row) in m.iter_mut().enumerate() {
        for (j, entry) in row.iter_mut().enumerate() {
            *entry = a[i][j].add(&eta.coeff(&[i as u8]).mul(&eta.coeff(&[j as u8])));
        }
    }
    let minv = crate::linalg::rf_inverse(&m, vars)
        .map_err(|_| StructError::NotContact("♭ is singular".into()))?;
    let mut lambda = Bivector::zero(chart);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            // Antisymmetry of ℛ^i ℛ^j − (M⁻¹)_{ij} is forced by the contact
            // identities; verify rather than assume.
            let upper = r.comp(i).mul(r.comp(j)).sub(&minv[i][j]);
            let lower = r.comp(j).mul(r.comp(i)).sub(&minv[j][i]);
            if !upper.add(&lower).is_zero() {
                return Err(StructError::Invalid(
                    "contact-induced bivector failed antisymmetry".into(),
                ));
            }
            if i < j {
                lambda.set(i, j, upper);
            }
        }
    }
    Ok((lambda, r.neg()))
}

/// Hamiltonian field of an admissible function on the Jacobi pair coming
/// from a contact form: X_f = f E − Λ♯(df). With the conventions above this
/// is exactly the contact Hamiltonian field of f.
pub fn hamiltonian_field_jacobi(
    lambda: &Bivector,
    e: &VectorField,
    f: &RatFn,
) -> StructResult<VectorField> {
    let chart = &lambda.chart;
    let df = DifferentialForm::one_form(chart, (0..chart.dim()).map(|i| f.diff(i)).collect());
    let sharp = lambda.sharp(&df)?;
    Ok(e.scale_rf(f).sub(&sharp)?)
}

/// Exact witness of L^ω = L^{Λ,E} for ω = dη and the contact-induced (Λ, E):
/// every v + ι_v dη decomposes through the pair, and every admissible
/// (α, Λ-image) pair lies in the graph of ω.
pub fn dirac_equivalence_check(eta: &DifferentialForm) -> StructResult<bool> {
    let chart = eta.chart.clone();
    let n = chart.dim();
    let vars = chart.vars();
    let (lambda, e) = jacobi_from_contact(eta)?;
    let r = e.neg();
    let deta = eta.exterior_derivative();
    // Forward: ∂_i = (ι_{∂_i} η) ℛ − Λ♯(ι_{∂_i} dη) for every coordinate field.
    for i in 0..n {
        let mut comps = vec![RatFn::zero(vars); n];
        comps[i] = RatFn::one(vars);
        let v = VectorField::new(&chart, comps);
        let alpha = deta.interior(&v)?;
        let vertical = r.scale_rf(&eta.pair(&v)?);
        let horizontal = lambda.sharp(&alpha)?;
        let rebuilt = vertical.sub(&horizontal)?;
        if rebuilt != v {
            return Ok(false);
        }
    }
    // Backward: for covectors α with ι_ℛ α = 0, ι_{−Λ♯α} dη = α; take the
    // generating family α_j = dx^j − (ι_ℛ dx^j) η.
    for j in 0..n {
        let mut comps = vec![RatFn::zero(vars); n];
        comps[j] = RatFn::one(vars);
        let dxj = DifferentialForm::one_form(&chart, comps);
        let rj = dxj.pair(&r)?;
        let alpha = dxj.sub(&eta.scale_rf(&rj))?;
        let w = lambda.sharp(&alpha)?.neg();
        if deta.interior(&w)? != alpha {
            return Ok(false);
        }
    }
    // The E-direction itself: ι_E dη = 0, so E + 0 sits in both graphs.
    if !deta.interior(&e)?.is_zero() {
        return Ok(false);
    }
    Ok(true)
}

/// Direct product of structure presentations: the sum of the pullbacks of
/// the factor forms (or bivectors) on the product chart. Two-form factors may
/// mix symplectic and presymplectic (the result is then presymplectic).
pub fn product_structure(
    product: &crate::geometry::ProductChart,
    factors: &[StructurePresentation],
) -> StructResult<StructurePresentation> {
    assert_eq!(factors.len(), product.num_blocks());
    let all_two_form = factors.iter().all(|f| {
        matches!(
            f,
            StructurePresentation::Symplectic(_) | StructurePresentation::Presymplectic(_)
        )
    });
    let all_bivector = factors
        .iter()
        .all(|f| matches!(f, StructurePresentation::PoissonBivector(_)));
    if all_two_form {
        let all_symplectic = factors
            .iter()
            .all(|f| matches!(f, StructurePresentation::Symplectic(_)));
        let mut acc = DifferentialForm::zero(&product.chart, 2);
        for (b, f) in factors.iter().enumerate() {
            let w = match f {
                StructurePresentation::Symplectic(w) | StructurePresentation::Presymplectic(w) => w,
                _ => unreachable!(),
            };
            acc = acc.add(&product.lift_form(w, b)?)?;
        }
        Ok(if all_symplectic {
            StructurePresentation::Symplectic(acc)
        } else {
            StructurePresentation::Presymplectic(acc)
        })
    } else if all_bivector {
        let mut acc = Bivector::zero(&product.chart);
        for (b, f) in factors.iter().enumerate() {
            let StructurePresentation::PoissonBivector(l) = f else {
                unreachable!()
            };
            let offset = product.block(b).offset;
            for (&(i, j), c) in l.terms() {
                let lifted = product.lift_rf(c, b)?;
                acc.set(i as usize + offset, j as usize + offset, lifted);
            }
        }
        Ok(StructurePresentation::PoissonBivector(acc))
    } else {
        Err(StructError::MixedTags)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprs::q;

    fn plane() -> Arc<Chart> {
        Chart::new("R2", &["x", "y"], &[], &[]).unwrap()
    }

    fn form2(chart: &Arc<Chart>, coeff: &str) -> DifferentialForm {
        let mut w = DifferentialForm::zero(chart, 2);
        w.add_term(vec![0, 1], chart.parse(coeff).unwrap());
        w
    }

    fn riccati_eta() -> DifferentialForm {
        let m = Chart::new("M", &["x", "y", "z"], &[], &["y*z"]).unwrap();
        DifferentialForm::one_form(
            &m,
            vec![
                m.parse("1/y^2").unwrap(),
                m.parse("1/y").unwrap(),
                m.parse("1/z").unwrap(),
            ],
        )
    }

    #[test]
    fn symplectic_hamiltonian_field() {
        let c = plane();
        let w = form2(&c, "1");
        // h = xy → X = x∂x − y∂y
        let x = hamiltonian_field_symplectic(&w, &c.parse("x*y").unwrap()).unwrap();
        assert_eq!(x, VectorField::parse(&c, &["x", "-y"]).unwrap());
        // Constant Hamiltonian → zero field.
        let z = hamiltonian_field_symplectic(&w, &c.parse("5").unwrap()).unwrap();
        assert!(z.is_zero());
    }

    #[test]
    fn projected_riccati_hamiltonian() {
        let c = Chart::new("P", &["x", "y"], &[], &["y"]).unwrap();
        let w = form2(&c, "2/y^3");
        let h3 = c.parse("-2*x/y^2 - 1").unwrap();
        let x = hamiltonian_field_symplectic(&w, &h3).unwrap();
        assert_eq!(x, VectorField::parse(&c, &["2*x", "y"]).unwrap());
    }

    #[test]
    fn lh_bracket_table_entries() {
        let c = plane();
        let w = StructurePresentation::Symplectic(form2(&c, "1"));
        let h4 = c.parse("y").unwrap();
        let h5 = c.parse("-x").unwrap();
        // {h4, h5} = 1 = h0
        assert_eq!(poisson_bracket(&w, &h4, &h5).unwrap(), c.parse("1").unwrap());
        // {f, f} = 0
        let h1 = c.parse("x*y").unwrap();
        assert!(poisson_bracket(&w, &h1, &h1).unwrap().is_zero());
        // {h1, h2} = 2 h2 with h2 = y²/2
        let h2 = c.parse("1/2*y^2").unwrap();
        assert_eq!(
            poisson_bracket(&w, &h1, &h2).unwrap(),
            c.parse("y^2").unwrap()
        );
    }

    #[test]
    fn projected_riccati_bracket_table() {
        let c = Chart::new("P", &["x", "y"], &[], &["y"]).unwrap();
        let w = StructurePresentation::Symplectic(form2(&c, "2/y^3"));
        let h1 = c.parse("-4*x^2/y^2").unwrap();
        let h2 = c.parse("1/y^2").unwrap();
        let h3 = c.parse("-2*x/y^2 - 1").unwrap();
        let h4 = c.parse("2").unwrap();
        // {h1, h2} = -4 h3 - 2 h4
        let expect = h3.scale(&q(-4)).add(&h4.scale(&q(-2)));
        assert_eq!(poisson_bracket(&w, &h1, &h2).unwrap(), expect);
        // {h1, h3} = 2 h1, {h2, h3} = -2 h2
        assert_eq!(poisson_bracket(&w, &h1, &h3).unwrap(), h1.scale(&q(2)));
        assert_eq!(poisson_bracket(&w, &h2, &h3).unwrap(), h2.scale(&q(-2)));
    }

    #[test]
    fn reeb_field_examples() {
        // Riccati: ℛ = z ∂z
        let eta = riccati_eta();
        let m = eta.chart.clone();
        assert_eq!(
            reeb_field(&eta).unwrap(),
            VectorField::parse(&m, &["0", "0", "z"]).unwrap()
        );
        // Darboux: η = dz + x dy → ℛ = ∂z
        let d = Chart::new("D", &["x", "y", "z"], &[], &[]).unwrap();
        let eta_d = DifferentialForm::one_form(
            &d,
            vec![
                d.parse("0").unwrap(),
                d.parse("x").unwrap(),
                d.parse("1").unwrap(),
            ],
        );
        assert_eq!(
            reeb_field(&eta_d).unwrap(),
            VectorField::parse(&d, &["0", "0", "1"]).unwrap()
        );
        // A non-contact one-form is rejected.
        let flat = DifferentialForm::one_form(
            &d,
            vec![
                d.parse("1").unwrap(),
                d.parse("0").unwrap(),
                d.parse("0").unwrap(),
            ],
        );
        assert!(matches!(reeb_field(&flat), Err(StructError::NotContact(_))));
    }

    #[test]
    fn contact_hamiltonians_riccati() {
        let eta = riccati_eta();
        let m = eta.chart.clone();
        let x2 = VectorField::parse(&m, &["-1", "0", "0"]).unwrap();
        let h2 = m.parse("1/y^2").unwrap();
        assert!(contact_hamiltonian_check(&eta, &x2, &h2).unwrap());
        // Wrong sign fails.
        assert!(!contact_hamiltonian_check(&eta, &x2, &h2.neg()).unwrap());
        // Liouville property of the full list.
        let hs = vec![
            m.parse("-4*x^2/y^2").unwrap(),
            h2,
            m.parse("-2*x/y^2 - 1").unwrap(),
            m.parse("2").unwrap(),
        ];
        assert!(contact_liouville_check(&eta, &hs).unwrap());
    }

    fn form2_on3(c: &Arc<Chart>) -> DifferentialForm {
        let mut w = DifferentialForm::zero(c, 2);
        w.add_term(vec![0, 1], c.parse("1").unwrap());
        w
    }

    #[test]
    fn presymplectic_solution_and_kernel() {
        // ω = dx∧dy on R³: kernel ∂z; h = z is not admissible.
        let c = Chart::new("R3", &["x", "y", "z"], &[], &[]).unwrap();
        let w = form2_on3(&c);
        let (x, kernel) = presymplectic_hamiltonian(&w, &c.parse("y").unwrap()).unwrap();
        // ι_X(dx∧dy) = dy → X = ∂x (+ kernel)
        assert_eq!(x, VectorField::parse(&c, &["1", "0", "0"]).unwrap());
        assert_eq!(kernel.len(), 1);
        assert_eq!(kernel[0], VectorField::parse(&c, &["0", "0", "1"]).unwrap());
        assert!(matches!(
            presymplectic_hamiltonian(&w, &c.parse("z").unwrap()),
            Err(StructError::NotAdmissible)
        ));
        // h = 0 → zero particular solution.
        let (z, _) = presymplectic_hamiltonian(&w, &c.parse("0").unwrap()).unwrap();
        assert!(z.is_zero());
    }

    #[test]
    fn riccati_presymplectic_from_contact() {
        // ω = dη for the Riccati η: h2 is admissible with X2 + ker dη.
        let eta = riccati_eta();
        let m = eta.chart.clone();
        let w = eta.exterior_derivative();
        let h2 = m.parse("1/y^2").unwrap();
        let (x, kernel) = presymplectic_hamiltonian(&w, &h2).unwrap();
        let x2 = VectorField::parse(&m, &["-1", "0", "0"]).unwrap();
        // The particular solution differs from X2 by a kernel element.
        let diff = x.sub(&x2).unwrap();
        let dw = w;
        let contraction = dw.interior(&diff).unwrap();
        assert!(contraction.is_zero());
        assert_eq!(kernel.len(), 1);
    }

    #[test]
    fn kernel_representative_independence() {
        // K g = 0 for K ∈ ker ω and admissible g.
        let c = Chart::new("R3", &["x", "y", "z"], &[], &[]).unwrap();
        let w = form2_on3(&c);
        let (_, kernel) = presymplectic_hamiltonian(&w, &c.parse("x").unwrap()).unwrap();
        let g = c.parse("x^2*y - x").unwrap(); // admissible: no z dependence
        for k in &kernel {
            assert!(k.apply_is_zero(&g));
        }
    }

    #[test]
    fn jacobi_pair_darboux() {
        let d = Chart::new("D", &["x", "y", "z"], &[], &[]).unwrap();
        let eta = DifferentialForm::one_form(
            &d,
            vec![
                d.parse("0").unwrap(),
                d.parse("x").unwrap(),
                d.parse("1").unwrap(),
            ],
        );
        let (lambda, e) = jacobi_from_contact(&eta).unwrap();
        // Λ = ∂x∧(∂y − x ∂z), E = −∂z
        assert_eq!(lambda.coeff(0, 1), d.parse("1").unwrap());
        assert_eq!(lambda.coeff(0, 2), d.parse("-x").unwrap());
        assert!(lambda.coeff(1, 2).is_zero());
        assert_eq!(e, VectorField::parse(&d, &["0", "0", "-1"]).unwrap());
        // Jacobi identities hold.
        StructurePresentation::Jacobi { lambda, e }.validate().unwrap();
    }

    #[test]
    fn jacobi_pair_riccati_identities_and_fields() {
        let eta = riccati_eta();
        let m = eta.chart.clone();
        let (lambda, e) = jacobi_from_contact(&eta).unwrap();
        StructurePresentation::Jacobi {
            lambda: lambda.clone(),
            e: e.clone(),
        }
        .validate()
        .unwrap();
        // X_f = fE − Λ♯(df) reproduces the contact fields X_i.
        let cases = [
            (["4*x^2", "4*x*y", "-4*x*z"], "-4*x^2/y^2"),
            (["-1", "0", "0"], "1/y^2"),
            (["2*x", "y", "0"], "-2*x/y^2 - 1"),
            (["0", "0", "-2*z"], "2"),
        ];
        for (comps, h) in cases {
            let xi = VectorField::parse(&m, &comps).unwrap();
            let f = m.parse(h).unwrap();
            assert_eq!(hamiltonian_field_jacobi(&lambda, &e, &f).unwrap(), xi);
        }
        // The Λ-bracket agrees with the dη-presymplectic bracket on the h's.
        let h1 = m.parse("-4*x^2/y^2").unwrap();
        let h2 = m.parse("1/y^2").unwrap();
        let h3 = m.parse("-2*x/y^2 - 1").unwrap();
        let expect = h3.scale(&q(-4)).add(&m.parse("2").unwrap().scale(&q(-2)));
        assert_eq!(lambda.bracket(&h1, &h2), expect);
    }

    #[test]
    fn dirac_graphs_coincide() {
        assert!(dirac_equivalence_check(&riccati_eta()).unwrap());
        let d = Chart::new("D", &["x", "y", "z"], &[], &[]).unwrap();
        let eta_d = DifferentialForm::one_form(
            &d,
            vec![
                d.parse("0").unwrap(),
                d.parse("x").unwrap(),
                d.parse("1").unwrap(),
            ],
        );
        assert!(dirac_equivalence_check(&eta_d).unwrap());
    }

    #[test]
    fn product_of_symplectic_forms() {
        let c = plane();
        let p = crate::geometry::ProductChart::power("P2", &c, 2).unwrap();
        let w = StructurePresentation::Symplectic(form2(&c, "1"));
        let prod = product_structure(&p, &[w.clone(), w]).unwrap();
        let StructurePresentation::Symplectic(form) = &prod else {
            panic!("expected symplectic product");
        };
        assert_eq!(form.coeff(&[0, 1]), p.chart.parse("1").unwrap());
        assert_eq!(form.coeff(&[2, 3]), p.chart.parse("1").unwrap());
        prod.validate().unwrap();
    }

    #[test]
    fn lambda_products_are_hamiltonian_for_direct_products() {
        // On the Riccati projection chart with ω = (2/y³)dx∧dy, the direct
        // product of X_i's is Hamiltonian for λ(h_i, h_i).
        let c = Chart::new("P", &["x", "y"], &[], &["y"]).unwrap();
        let w = form2(&c, "2/y^3");
        let p = crate::geometry::ProductChart::power("P2", &c, 2).unwrap();
        let wprod = product_structure(
            &p,
            &[
                StructurePresentation::Symplectic(w.clone()),
                StructurePresentation::Symplectic(w.clone()),
            ],
        )
        .unwrap();
        let StructurePresentation::Symplectic(wp) = &wprod else {
            panic!()
        };
        let h1 = c.parse("-4*x^2/y^2").unwrap();
        let x1 = hamiltonian_field_symplectic(&w, &h1).unwrap();
        let lam = p.lambda(&[h1.clone(), h1.clone()]).unwrap();
        let xprod = p.direct_product(&[x1.clone(), x1]).unwrap();
        let xsolved = hamiltonian_field_symplectic(wp, &lam).unwrap();
        assert_eq!(xsolved, xprod);
        // λ is not an ℝ-algebra morphism: λ(h1, h1) ≠ λ(x,x)·λ(y,y) for h1 = xy.
        let cplain = plane();
        let pp = crate::geometry::ProductChart::power("Q2", &cplain, 2).unwrap();
        let hxy = cplain.parse("x*y").unwrap();
        let lam_h = pp.lambda(&[hxy.clone(), hxy]).unwrap();
        let lam_x = pp
            .lambda(&[cplain.parse("x").unwrap(), cplain.parse("x").unwrap()])
            .unwrap();
        let lam_y = pp
            .lambda(&[cplain.parse("y").unwrap(), cplain.parse("y").unwrap()])
            .unwrap();
        assert_ne!(lam_h, lam_x.mul(&lam_y));
    }

    #[test]
    fn mixed_tags_rejected() {
        let c = plane();
        let p = crate::geometry::ProductChart::power("P2", &c, 2).unwrap();
        let w = StructurePresentation::Symplectic(form2(&c, "1"));
        let mut l = Bivector::zero(&c);
        l.set(0, 1, c.parse("1").unwrap());
        let b = StructurePresentation::PoissonBivector(l);
        assert!(matches!(
            product_structure(&p, &[w, b]),
            Err(StructError::MixedTags)
        ));
    }
}
