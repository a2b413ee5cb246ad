//! Executes every check encoded in a scenario, in a fixed order, into a
//! machine-readable report. Reports are deterministic for a fixed seed.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::coalg::{self, PolyOnDual, ProductDual};
use crate::dynamics::{
    self, Method, ReconExpr, SuperpositionRule, TimeDependentField, Trajectory,
};
use crate::exprs::{parse_rf, RatFn, Rational};
use crate::geometry::{Chart, VectorField};
use crate::liealg::{
    self, closure, injectivity_test, invariant_one_forms, verify_constants, InjectivityVerdict,
    LieAlgebraOfFields,
};
use crate::linalg::rref_rows;
use crate::structures::{
    contact_hamiltonian_check, contact_liouville_check, dirac_equivalence_check,
    hamiltonian_field_jacobi, hamiltonian_field_symplectic, jacobi_from_contact, poisson_bracket,
    presymplectic_hamiltonian, reeb_field, StructurePresentation,
};

use super::schema::*;
use super::{time_coeffs_for, ResolvedProduct, ResolvedStructure, Scenario, ScenarioResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    SampledPass,
    Fail,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub scenario: String,
    pub seed: u64,
    pub passed: usize,
    pub failed: usize,
    pub checks: Vec<CheckResult>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }

    pub fn summary_lines(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let tag = match c.status {
                Status::Pass => "PASS",
                Status::SampledPass => "PASS (sampled)",
                Status::Fail => "FAIL",
            };
            out.push_str(&format!("[{tag}] {}: {}\n", c.name, c.detail));
        }
        out.push_str(&format!(
            "{}: {} passed, {} failed\n",
            self.scenario, self.passed, self.failed
        ));
        out
    }
}

struct Ctx<'a> {
    sc: &'a Scenario,
    rng: ChaCha8Rng,
    checks: Vec<CheckResult>,
    /// Closure of the main generators, computed once.
    algebra: Option<LieAlgebraOfFields>,
    /// Pullback invariants produced earlier in the pipeline, by name.
    produced: BTreeMap<String, (String, RatFn)>,
}

impl Ctx<'_> {
    fn pass(&mut self, name: &str, detail: impl Into<String>) {
        self.checks.push(CheckResult {
            name: name.to_string(),
            status: Status::Pass,
            detail: detail.into(),
        });
    }

    fn sampled(&mut self, name: &str, detail: impl Into<String>) {
        self.checks.push(CheckResult {
            name: name.to_string(),
            status: Status::SampledPass,
            detail: detail.into(),
        });
    }

    fn fail(&mut self, name: &str, detail: impl Into<String>) {
        self.checks.push(CheckResult {
            name: name.to_string(),
            status: Status::Fail,
            detail: detail.into(),
        });
    }

    fn check(&mut self, name: &str, ok: bool, detail: impl Into<String>) {
        if ok {
            self.pass(name, detail);
        } else {
            self.fail(name, detail);
        }
    }
}

fn fmt_vec(v: &[Rational]) -> String {
    let parts: Vec<String> = v.iter().map(|q| q.to_string()).collect();
    format!("({})", parts.join(", "))
}

/// Execute every check of the scenario with the given seed.
pub fn run_all(sc: &Scenario, seed: u64) -> Report {
    let mut ctx = Ctx {
        sc,
        rng: ChaCha8Rng::seed_from_u64(seed),
        checks: Vec::new(),
        algebra: None,
        produced: BTreeMap::new(),
    };

    stage_closure(&mut ctx);
    stage_splittings(&mut ctx);
    stage_automorphic_and_symmetries(&mut ctx);
    stage_invariant_forms(&mut ctx);
    stage_structures(&mut ctx);
    stage_casimirs(&mut ctx);
    stage_momentum_maps(&mut ctx);
    stage_pullbacks(&mut ctx);
    stage_product_invariants(&mut ctx);
    stage_identities(&mut ctx);
    stage_injectivity(&mut ctx);
    stage_perturbation(&mut ctx);
    stage_numerics(&mut ctx);

    let passed = ctx
        .checks
        .iter()
        .filter(|c| c.status != Status::Fail)
        .count();
    let failed = ctx.checks.len() - passed;
    Report {
        scenario: sc.raw.name.clone(),
        seed,
        passed,
        failed,
        checks: ctx.checks,
        notes: sc.raw.notes.clone(),
    }
}

fn stage_closure(ctx: &mut Ctx) {
    let sc = ctx.sc;
    let gens: Vec<VectorField> = sc
        .generator_names
        .iter()
        .map(|n| sc.fields[n].clone())
        .collect();
    let alg = match closure(&gens, 64, &mut ctx.rng) {
        Ok(a) => a,
        Err(e) => {
            ctx.fail("closure", format!("{e}"));
            return;
        }
    };
    let Some(expected) = &sc.raw.expected else {
        ctx.pass("closure", format!("dimension {}", alg.dim()));
        ctx.algebra = Some(alg);
        return;
    };
    if alg.dim() != expected.dimension {
        ctx.fail(
            "closure",
            format!("dimension {} != expected {}", alg.dim(), expected.dimension),
        );
        ctx.algebra = Some(alg);
        return;
    }
    ctx.pass("closure", format!("dimension {}", alg.dim()));

    // Cell-for-cell table comparison: listed pairs must match exactly, and
    // every unlisted pair must vanish.
    let n = sc.generator_names.len();
    let mut expected_table: BTreeMap<(usize, usize), Vec<Rational>> = BTreeMap::new();
    let mut table_ok = true;
    let mut detail = String::new();
    for b in &expected.commutation_table {
        let li = sc.generator_names.iter().position(|g| g == &b.lhs);
        let ri = sc.generator_names.iter().position(|g| g == &b.rhs);
        let (Some(li), Some(ri)) = (li, ri) else {
            table_ok = false;
            detail = format!("unknown pair ({}, {})", b.lhs, b.rhs);
            break;
        };
        let mut v = vec![Rational::zero(); n];
        for (name, coeff) in &b.result {
            let Some(k) = sc.generator_names.iter().position(|g| g == name) else {
                table_ok = false;
                detail = format!("unknown basis element {name}");
                break;
            };
            v[k] = match super::schema_rational(coeff) {
                Ok(q) => q,
                Err(e) => {
                    table_ok = false;
                    detail = e;
                    break;
                }
            };
        }
        expected_table.insert((li, ri), v);
    }
    if table_ok {
        'outer: for i in 0..n {
            for j in i + 1..n {
                let computed = alg.structure_constants(i, j).to_vec();
                let expect = expected_table
                    .get(&(i, j))
                    .cloned()
                    .unwrap_or_else(|| vec![Rational::zero(); n]);
                if computed != expect {
                    table_ok = false;
                    detail = format!(
                        "[{}, {}] = {} but expected {}",
                        sc.generator_names[i],
                        sc.generator_names[j],
                        fmt_vec(&computed),
                        fmt_vec(&expect)
                    );
                    break 'outer;
                }
            }
        }
    }
    ctx.check(
        "commutation-table",
        table_ok,
        if table_ok {
            format!("{} pairs match", n * (n - 1) / 2)
        } else {
            detail
        },
    );
    // Structure constants are antisymmetric and satisfy Jacobi by
    // construction; re-check as a report line.
    ctx.check("structure-constants-jacobi", alg.jacobi_holds(), "antisymmetry + Jacobi");
    ctx.algebra = Some(alg);
}

fn element_vectors(sc: &Scenario, elems: &[RawElement]) -> ScenarioResult<Vec<Vec<Rational>>> {
    elems.iter().map(|e| sc.element_vector(e)).collect()
}

fn stage_splittings(ctx: &mut Ctx) {
    let sc = ctx.sc;
    let Some(alg) = ctx.algebra.clone() else {
        return;
    };
    for sd in &sc.raw.semidirect {
        let name = format!("semidirect:{}", sd.name);
        let (p1, p2) = match (element_vectors(sc, &sd.part1), element_vectors(sc, &sd.part2)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                ctx.fail(&name, format!("{e}"));
                continue;
            }
        };
        let report = alg.check_semidirect(&p1, &p2);
        let ok = report.confirmed() == sd.expect;
        ctx.check(
            &name,
            ok,
            format!(
                "subalgebra={}, ideal={}, direct-sum={}",
                report.part1_subalgebra, report.part2_ideal, report.direct_sum
            ),
        );
    }
    for sub in &sc.raw.subalgebra_checks {
        let name = format!("span:{}", sub.name);
        let vs = match element_vectors(sc, &sub.fields) {
            Ok(v) => v,
            Err(e) => {
                ctx.fail(&name, format!("{e}"));
                continue;
            }
        };
        let mut ok = true;
        let mut parts = Vec::new();
        if let Some(expect) = sub.expect_subalgebra {
            let got = alg.check_subalgebra(&vs);
            parts.push(format!("subalgebra={got}"));
            ok &= got == expect;
        }
        if let Some(expect) = sub.expect_ideal {
            let got = alg.check_ideal(&vs);
            parts.push(format!("ideal={got}"));
            ok &= got == expect;
        }
        if let Some(expect) = sub.expect_abelian {
            let mut abelian = true;
            for a in &vs {
                for b in &vs {
                    if alg.bracket_vec(a, b).iter().any(|c| !c.is_zero()) {
                        abelian = false;
                    }
                }
            }
            parts.push(format!("abelian={abelian}"));
            ok &= abelian == expect;
        }
        ctx.check(&name, ok, parts.join(", "));
    }
}

fn stage_automorphic_and_symmetries(ctx: &mut Ctx) {
    let sc = ctx.sc;
    for la in &sc.raw.locally_automorphic {
        let name = format!("locally-automorphic:{}", la.fields.join(","));
        let fields = match sc.fields_named(&la.fields) {
            Ok(f) => f,
            Err(e) => {
                ctx.fail(&name, format!("{e}"));
                continue;
            }
        };
        // Dimension mismatch alone decides; otherwise test the wedge.
        let result = if fields.len() != sc.chart.dim() {
            Ok((false, None))
        } else {
            crate::geometry::wedge_volume(&fields).map(|v| (!v.is_zero(), Some(v)))
        };
        match result {
            Ok((got, vol)) => {
                let mut ok = got == la.expect;
                let mut detail = format!("locally automorphic = {got}");
                if let (Some(expect_text), Some(v)) = (&la.volume, &vol) {
                    match sc.chart.parse(expect_text) {
                        Ok(expect) => {
                            let vol_ok = *v == expect;
                            detail.push_str(&format!(", volume = {v}"));
                            if !vol_ok {
                                detail.push_str(&format!(" != expected {expect}"));
                            }
                            ok &= vol_ok;
                        }
                        Err(e) => {
                            ok = false;
                            detail = format!("{e}");
                        }
                    }
                }
                ctx.check(&name, ok, detail);
            }
            Err(e) => ctx.fail(&name, format!("{e}")),
        }
    }
    for sy in &sc.raw.symmetries {
        let name = format!("symmetries:{}", sy.candidates.join(","));
        let run = || -> ScenarioResult<(Vec<bool>, bool)> {
            let basis = sc.fields_named(&sy.algebra)?;
            let alg = LieAlgebraOfFields::from_basis(sc.chart.clone(), basis)
                .map_err(|e| super::ScenarioError::Schema(format!("{e}")))?;
            let candidates = sc.fields_named(&sy.candidates)?;
            let got = alg
                .check_symmetries(&candidates)
                .map_err(|e| super::ScenarioError::Schema(format!("{e}")))?;
            let ok = got == sy.expect;
            Ok((got, ok))
        };
        match run() {
            Ok((got, ok)) => ctx.check(&name, ok, format!("{got:?}")),
            Err(e) => ctx.fail(&name, format!("{e}")),
        }
    }
}

fn stage_invariant_forms(ctx: &mut Ctx) {
    let sc = ctx.sc;
    let Some(inv) = &sc.raw.invariant_forms else {
        return;
    };
    let run = || -> ScenarioResult<(bool, String)> {
        let frame_fields = sc.fields_named(&inv.frame_fields)?;
        let frame = crate::geometry::dual_frame(&frame_fields)?;
        // Optional exact match of the dual frame itself.
        let mut frame_ok = true;
        let mut frame_detail = String::new();
        if let Some(expected) = &inv.expected_frame {
            for (i, comps) in expected.iter().enumerate() {
                let parsed: Vec<RatFn> = comps
                    .iter()
                    .map(|t| sc.chart.parse(t))
                    .collect::<Result<_, _>>()?;
                let expected_form =
                    crate::geometry::DifferentialForm::one_form(&sc.chart, parsed);
                if frame[i] != expected_form {
                    frame_ok = false;
                    frame_detail = format!("frame form {} is {}", i + 1, frame[i]);
                    break;
                }
            }
        }
        let extra = sc.fields_named(&inv.extra_fields)?;
        let basis = invariant_one_forms(&frame, &extra)
            .map_err(|e| super::ScenarioError::Schema(format!("{e}")))?;
        let mut expected_rows = Vec::new();
        for row in &inv.expected_basis {
            let mut v = Vec::new();
            for c in row {
                v.push(
                    super::schema_rational(c)
                        .map_err(super::ScenarioError::Schema)?,
                );
            }
            expected_rows.push(v);
        }
        let expected = rref_rows(&expected_rows);
        let ok = basis == expected && frame_ok;
        let detail = if ok {
            format!("solution space of dimension {}", basis.len())
        } else if !frame_ok {
            frame_detail
        } else {
            format!(
                "basis {:?} != expected {:?}",
                basis.iter().map(|r| fmt_vec(r)).collect::<Vec<_>>(),
                expected.iter().map(|r| fmt_vec(r)).collect::<Vec<_>>()
            )
        };
        Ok((ok, detail))
    };
    match run() {
        Ok((ok, detail)) => ctx.check("invariant-one-forms", ok, detail),
        Err(e) => ctx.fail("invariant-one-forms", format!("{e}")),
    }
}

/// The fields a structure checks against: projected onto its sub-chart when
/// one is declared.
fn structure_field(
    sc: &Scenario,
    st: &ResolvedStructure,
    gen_name: &str,
) -> ScenarioResult<VectorField> {
    let base = sc.field(gen_name)?;
    match &st.sub_coords {
        None => Ok(base.clone()),
        Some(coords) => {
            let projected = crate::geometry::pushforward_projection(base, coords)
                .map_err(|e| super::ScenarioError::Schema(format!("{e}")))?;
            Ok(VectorField::new(&st.chart, projected.comps().to_vec()))
        }
    }
}

fn stage_structures(ctx: &mut Ctx) {
    let sc = ctx.sc;
    for raw in &sc.raw.structures {
        let st = &sc.structures[&raw.name];
        let prefix = format!("structure:{}", raw.name);
        // Validity of the presentation.
        match st.presentation.validate() {
            Ok(()) => ctx.pass(&format!("{prefix}:valid"), st.presentation.kind()),
            Err(e) => {
                ctx.fail(&format!("{prefix}:valid"), format!("{e}"));
                continue;
            }
        }
        // Contact volume coefficient.
        if let (StructurePresentation::Contact(eta), Some(expect)) =
            (&st.presentation, &st.expected_volume)
        {
            match crate::structures::contact_volume(eta) {
                Ok(v) => ctx.check(
                    &format!("{prefix}:volume"),
                    v == *expect,
                    format!("η∧(dη)^n = {v}"),
                ),
                Err(e) => ctx.fail(&format!("{prefix}:volume"), format!("{e}")),
            }
        }
        // Reeb field.
        if let StructurePresentation::Contact(eta) = &st.presentation {
            match reeb_field(eta) {
                Ok(r) => {
                    if let Some(expect) = &st.expected_reeb {
                        ctx.check(
                            &format!("{prefix}:reeb"),
                            r == *expect,
                            format!("ℛ = {r}"),
                        );
                    }
                }
                Err(e) => ctx.fail(&format!("{prefix}:reeb"), format!("{e}")),
            }
        }
        // Hamiltonian relations, one per pair.
        if !st.hamiltonians.is_empty() {
            let mut all_ok = true;
            let mut detail = String::new();
            for (gen, h) in &st.hamiltonians {
                let field = match structure_field(sc, st, gen) {
                    Ok(f) => f,
                    Err(e) => {
                        all_ok = false;
                        detail = format!("{e}");
                        break;
                    }
                };
                let ok = match &st.presentation {
                    StructurePresentation::Contact(eta) => {
                        matches!(contact_hamiltonian_check(eta, &field, h), Ok(true))
                    }
                    StructurePresentation::Symplectic(w) => {
                        matches!(hamiltonian_field_symplectic(w, h), Ok(x) if x == field)
                    }
                    StructurePresentation::Presymplectic(w) => {
                        // ι_X ω = dh for the given field.
                        match presymplectic_hamiltonian(w, h) {
                            Ok((x, _)) => {
                                let diff = match field.sub(&x) {
                                    Ok(d) => d,
                                    Err(_) => {
                                        all_ok = false;
                                        continue;
                                    }
                                };
                                matches!(w.interior(&diff), Ok(c) if c.is_zero())
                            }
                            Err(_) => false,
                        }
                    }
                    StructurePresentation::PoissonBivector(l) => {
                        // X = Λ♯(dh)
                        let dh = crate::geometry::DifferentialForm::one_form(
                            &st.chart,
                            (0..st.chart.dim()).map(|i| h.diff(i)).collect(),
                        );
                        matches!(l.sharp(&dh), Ok(x) if x == field)
                    }
                    StructurePresentation::Jacobi { lambda, e } => {
                        matches!(hamiltonian_field_jacobi(lambda, e, h), Ok(x) if x == field)
                    }
                };
                if !ok {
                    all_ok = false;
                    detail = format!("relation fails for {gen}");
                    break;
                }
            }
            ctx.check(
                &format!("{prefix}:hamiltonians"),
                all_ok,
                if all_ok {
                    format!("{} pairs verified", st.hamiltonians.len())
                } else {
                    detail
                },
            );
        }
        // Bracket table.
        if !raw.bracket_table.is_empty() {
            let mut lookup: BTreeMap<String, RatFn> = st.extra_functions.clone();
            for (g, h) in &st.hamiltonians {
                lookup.insert(g.clone(), h.clone());
            }
            let mut all_ok = true;
            let mut detail = format!("{} listed brackets", raw.bracket_table.len());
            // Listed entries must match; unlisted pairs must vanish.
            let mut listed: BTreeSet<(String, String)> = BTreeSet::new();
            for b in &raw.bracket_table {
                listed.insert((b.lhs.clone(), b.rhs.clone()));
                let run = || -> ScenarioResult<bool> {
                    let f = lookup
                        .get(&b.lhs)
                        .ok_or_else(|| super::ScenarioError::DanglingReference(b.lhs.clone()))?;
                    let g = lookup
                        .get(&b.rhs)
                        .ok_or_else(|| super::ScenarioError::DanglingReference(b.rhs.clone()))?;
                    let lhs = poisson_bracket(&st.presentation, f, g)
                        .map_err(|e| super::ScenarioError::Schema(format!("{e}")))?;
                    let mut rhs = RatFn::zero(st.chart.vars());
                    for (name, coeff) in &b.result {
                        let hk = lookup.get(name).ok_or_else(|| {
                            super::ScenarioError::DanglingReference(name.clone())
                        })?;
                        let c = super::schema_rational(coeff)
                            .map_err(super::ScenarioError::Schema)?;
                        rhs = rhs.add(&hk.scale(&c));
                    }
                    Ok(lhs == rhs)
                };
                match run() {
                    Ok(true) => {}
                    Ok(false) => {
                        all_ok = false;
                        detail = format!("{{{}, {}}} mismatch", b.lhs, b.rhs);
                        break;
                    }
                    Err(e) => {
                        all_ok = false;
                        detail = format!("{e}");
                        break;
                    }
                }
            }
            if all_ok {
                let names: Vec<&String> = st.hamiltonians.iter().map(|(g, _)| g).collect();
                'pairs: for (i, a) in names.iter().enumerate() {
                    for b in names.iter().skip(i + 1) {
                        if listed.contains(&((*a).clone(), (*b).clone()))
                            || listed.contains(&((*b).clone(), (*a).clone()))
                        {
                            continue;
                        }
                        let f = &lookup[*a];
                        let g = &lookup[*b];
                        match poisson_bracket(&st.presentation, f, g) {
                            Ok(v) if v.is_zero() => {}
                            Ok(_) => {
                                all_ok = false;
                                detail = format!("unlisted {{{a}, {b}}} is nonzero");
                                break 'pairs;
                            }
                            Err(e) => {
                                all_ok = false;
                                detail = format!("{e}");
                                break 'pairs;
                            }
                        }
                    }
                }
            }
            ctx.check(&format!("{prefix}:bracket-table"), all_ok, detail);
        }
        // Liouville type.
        if let (Some(expect), StructurePresentation::Contact(eta)) =
            (raw.liouville, &st.presentation)
        {
            let hs: Vec<RatFn> = st.hamiltonians.iter().map(|(_, h)| h.clone()).collect();
            match contact_liouville_check(eta, &hs) {
                Ok(got) => ctx.check(
                    &format!("{prefix}:liouville"),
                    got == expect,
                    format!("Reeb-invariant Hamiltonians = {got}"),
                ),
                Err(e) => ctx.fail(&format!("{prefix}:liouville"), format!("{e}")),
            }
        }
        // Jacobi pair from the contact form.
        if raw.jacobi_pair {
            if let StructurePresentation::Contact(eta) = &st.presentation {
                let run = || -> Result<String, String> {
                    let (lambda, e) =
                        jacobi_from_contact(eta).map_err(|e| format!("{e}"))?;
                    StructurePresentation::Jacobi {
                        lambda: lambda.clone(),
                        e: e.clone(),
                    }
                    .validate()
                    .map_err(|e| format!("{e}"))?;
                    for (gen, h) in &st.hamiltonians {
                        let field = structure_field(sc, st, gen).map_err(|e| format!("{e}"))?;
                        let xf = hamiltonian_field_jacobi(&lambda, &e, h)
                            .map_err(|e| format!("{e}"))?;
                        if xf != field {
                            return Err(format!("X_f does not reproduce {gen}"));
                        }
                    }
                    Ok("[Λ,Λ] = 2E∧Λ, [E,Λ] = 0, X_f reproduces the generators".into())
                };
                match run() {
                    Ok(detail) => ctx.pass(&format!("{prefix}:jacobi-pair"), detail),
                    Err(e) => ctx.fail(&format!("{prefix}:jacobi-pair"), e),
                }
            }
        }
        if raw.dirac_equivalence {
            if let StructurePresentation::Contact(eta) = &st.presentation {
                match dirac_equivalence_check(eta) {
                    Ok(true) => ctx.pass(
                        &format!("{prefix}:dirac-equivalence"),
                        "graph of dη and Jacobi pair present the same sections",
                    ),
                    Ok(false) => ctx.fail(&format!("{prefix}:dirac-equivalence"), "graphs differ"),
                    Err(e) => ctx.fail(&format!("{prefix}:dirac-equivalence"), format!("{e}")),
                }
            }
        }
    }
}

fn stage_casimirs(ctx: &mut Ctx) {
    let sc = ctx.sc;
    for (alg_name, ra) in &sc.algebras {
        for (cname, c) in &ra.casimirs {
            let name = format!("casimir:{alg_name}:{cname}");
            match coalg::casimir_check(c) {
                Ok(true) => ctx.pass(&name, "commutes with every coordinate"),
                Ok(false) => ctx.fail(&name, "does not commute"),
                Err(e) => ctx.fail(&name, format!("{e}")),
            }
        }
    }
}

fn stage_momentum_maps(ctx: &mut Ctx) {
    let sc = ctx.sc;
    for (name, ma) in &sc.momentum_maps {
        let check = format!("momentum-map:{name}");
        match ma.verify_morphism() {
            Ok(true) => ctx.pass(&check, "bracket table realized exactly"),
            Ok(false) => ctx.fail(&check, "morphism property fails"),
            Err(e) => ctx.fail(&check, format!("{e}")),
        }
    }
}

fn stage_pullbacks(ctx: &mut Ctx) {
    let sc = ctx.sc;
    for pb in &sc.raw.pullback_invariants {
        let name = format!("pullback:{}", pb.name);
        let run = || -> Result<(RatFn, String, String), String> {
            let ra = &sc.algebras[&pb.algebra];
            let casimir = &ra.casimirs[&pb.casimir];
            let sub: BTreeSet<usize> = pb
                .prolong
                .subalgebra
                .iter()
                .map(|s| {
                    ra.algebra
                        .basis
                        .iter()
                        .position(|b| b == s)
                        .ok_or_else(|| format!("unknown basis element {s}"))
                })
                .collect::<Result<_, _>>()?;
            let mut poly = coalg::mixed_prolong(
                casimir,
                pb.prolong.full,
                pb.prolong.sub + 1,
                &sub,
            )
            .map_err(|e| format!("{e}"))?;
            if let Some(total_sub) = pb.extend_sub_copies {
                let mut copies = vec![coalg::CopyKind::Full; pb.prolong.full];
                copies.extend(
                    std::iter::repeat(coalg::CopyKind::Sub(sub.clone())).take(total_sub),
                );
                let target = ProductDual::product(&ra.algebra, copies);
                let copy_map: Vec<usize> = (0..pb.prolong.full + pb.prolong.sub).collect();
                poly = coalg::embed_into(&poly, &target, &copy_map).map_err(|e| format!("{e}"))?;
            }
            for swap in &pb.permute {
                if swap.len() != 2 {
                    return Err("permutations are given as swaps [a, b]".into());
                }
                let n_copies = poly.dual.copies.len();
                let mut perm: Vec<usize> = (0..n_copies).collect();
                perm.swap(swap[0] - 1, swap[1] - 1);
                poly = coalg::permute_copies(&poly, &perm).map_err(|e| format!("{e}"))?;
            }
            let product = &sc.products[&pb.product];
            let assignments: Vec<(&crate::coalg::MomentumAssignment, Option<usize>)> = pb
                .assignments
                .iter()
                .map(|a| -> Result<_, String> {
                    let ma = &sc.momentum_maps[&a.map];
                    let block = match &a.block {
                        None => None,
                        Some(tag) => Some(
                            product
                                .block_tags
                                .iter()
                                .position(|t| t == tag)
                                .ok_or_else(|| format!("unknown block {tag}"))?,
                        ),
                    };
                    Ok((ma, block))
                })
                .collect::<Result<_, _>>()?;
            let rf = coalg::pullback(&poly, &assignments, &product.product)
                .map_err(|e| format!("{e}"))?;
            let printed = format!("{rf}");
            Ok((rf, pb.product.clone(), printed))
        };
        match run() {
            Ok((rf, product_name, printed)) => {
                let mut ok = true;
                let mut detail = printed.clone();
                if let Some(expect_text) = &pb.expect {
                    let product = &sc.products[&product_name];
                    match parse_rf(expect_text, product.product.chart.vars()) {
                        Ok(expect) => {
                            if rf != expect {
                                ok = false;
                                detail = format!("got {rf}, expected {expect}");
                            }
                        }
                        Err(e) => {
                            ok = false;
                            detail = format!("{e}");
                        }
                    }
                }
                if ok {
                    if let Some(reg) = &pb.register_on {
                        let target = &sc.products[reg];
                        // Re-express by name on the target product chart.
                        match parse_rf(&rf.to_string(), target.product.chart.vars()) {
                            Ok(on_target) => {
                                let gens: Vec<VectorField> = target
                                    .generators
                                    .iter()
                                    .map(|(_, f)| f.clone())
                                    .collect();
                                let verdict = verify_constants(&gens, &[on_target.clone()]);
                                if verdict == vec![true] {
                                    ctx.produced
                                        .insert(pb.name.clone(), (reg.clone(), on_target));
                                    detail = format!("constant of motion of {reg}: {rf}");
                                } else {
                                    ok = false;
                                    detail = format!("not a constant of motion of {reg}");
                                }
                            }
                            Err(e) => {
                                ok = false;
                                detail = format!("re-parse on {reg}: {e}");
                            }
                        }
                    } else {
                        ctx.produced
                            .insert(pb.name.clone(), (product_name.clone(), rf.clone()));
                    }
                }
                ctx.check(&name, ok, detail);
            }
            Err(e) => ctx.fail(&name, e),
        }
    }
}

fn stage_product_invariants(ctx: &mut Ctx) {
    let sc = ctx.sc;
    for (pname, product) in &sc.products {
        if product.invariants.is_empty() {
            continue;
        }
        let gens: Vec<VectorField> = product.generators.iter().map(|(_, f)| f.clone()).collect();
        let invs: Vec<RatFn> = product.invariants.values().cloned().collect();
        let names: Vec<&String> = product.invariants.keys().collect();
        let verdicts = verify_constants(&gens, &invs);
        let ok = verdicts.iter().all(|v| *v);
        let detail = if ok {
            format!("{} invariants annihilated by all generators", invs.len())
        } else {
            let bad: Vec<&str> = names
                .iter()
                .zip(&verdicts)
                .filter(|(_, v)| !**v)
                .map(|(n, _)| n.as_str())
                .collect();
            format!("not constant: {}", bad.join(", "))
        };
        ctx.check(&format!("invariants:{pname}"), ok, detail);
    }
}

fn stage_identities(ctx: &mut Ctx) {
    let sc = ctx.sc;
    for (i, id) in sc.raw.identities.iter().enumerate() {
        match id {
            RawIdentity::DerivedSquare {
                product,
                field,
                blocks,
                of,
                sqrt,
            } => {
                let name = format!("identity:derived-square:{i}");
                let run = || -> Result<bool, String> {
                    let rp = sc
                        .products
                        .get(product)
                        .ok_or_else(|| format!("unknown product {product}"))?;
                    let base = sc.field(field).map_err(|e| format!("{e}"))?;
                    let block_idxs: Vec<usize> = blocks
                        .iter()
                        .map(|t| {
                            rp.block_tags
                                .iter()
                                .position(|bt| bt == t)
                                .ok_or_else(|| format!("unknown block {t}"))
                        })
                        .collect::<Result<_, _>>()?;
                    let prolonged = rp
                        .product
                        .prolong(base, &block_idxs)
                        .map_err(|e| format!("{e}"))?;
                    let of_rf = lookup_invariant(ctx, rp, product, of)?;
                    let sqrt_rf = lookup_invariant(ctx, rp, product, sqrt)?;
                    let lhs = prolonged.apply(&of_rf);
                    Ok(lhs == sqrt_rf.mul(&sqrt_rf))
                };
                match run() {
                    Ok(true) => ctx.pass(&name, format!("{field}-prolongation of {of} = {sqrt}^2")),
                    Ok(false) => ctx.fail(&name, "identity fails"),
                    Err(e) => ctx.fail(&name, e),
                }
            }
            RawIdentity::ProductOfInvariants {
                product,
                result,
                factors,
                scale,
            } => {
                let name = format!("identity:product:{i}");
                let run = || -> Result<bool, String> {
                    let rp = sc
                        .products
                        .get(product)
                        .ok_or_else(|| format!("unknown product {product}"))?;
                    let res = lookup_invariant(ctx, rp, product, result)?;
                    let s = super::schema_rational(scale)?;
                    let mut acc = RatFn::constant(rp.product.chart.vars(), s);
                    for f in factors {
                        acc = acc.mul(&lookup_invariant(ctx, rp, product, f)?);
                    }
                    Ok(res == acc)
                };
                match run() {
                    Ok(true) => ctx.pass(&name, format!("{result} = {scale}·{}", factors.join("·"))),
                    Ok(false) => ctx.fail(&name, "identity fails"),
                    Err(e) => ctx.fail(&name, e),
                }
            }
        }
    }
}

fn lookup_invariant(
    ctx: &Ctx,
    rp: &ResolvedProduct,
    product_name: &str,
    name: &str,
) -> Result<RatFn, String> {
    if let Some(rf) = rp.invariants.get(name) {
        return Ok(rf.clone());
    }
    if let Some((pname, rf)) = ctx.produced.get(name) {
        if pname == product_name {
            return Ok(rf.clone());
        }
    }
    Err(format!("unknown invariant {name} on product {product_name}"))
}

fn stage_injectivity(ctx: &mut Ctx) {
    let sc = ctx.sc;
    for p in &sc.raw.products {
        let rp = &sc.products[&p.name];
        for (i, spec) in p.injectivity.iter().enumerate() {
            let name = format!("injectivity:{}:{i}", p.name);
            let run = |rng: &mut ChaCha8Rng| -> Result<(InjectivityVerdict, bool), String> {
                let gens: Vec<VectorField> =
                    rp.generators.iter().map(|(_, f)| f.clone()).collect();
                let alg = closure(&gens, 64, rng).map_err(|e| format!("{e}"))?;
                let drop: Vec<usize> = match (&spec.drop_block, &spec.drop_coordinates) {
                    (Some(tag), None) => {
                        let bi = rp
                            .block_tags
                            .iter()
                            .position(|t| t == tag)
                            .ok_or_else(|| format!("unknown block {tag}"))?;
                        let block = rp.product.block(bi);
                        (block.offset..block.offset + block.factor.dim()).collect()
                    }
                    (None, Some(names)) => names
                        .iter()
                        .map(|n| {
                            rp.product
                                .chart
                                .coord_index(n)
                                .ok_or_else(|| format!("unknown coordinate {n}"))
                        })
                        .collect::<Result<_, _>>()?,
                    _ => return Err("give exactly one of drop_block, drop_coordinates".into()),
                };
                let verdict = injectivity_test(&alg, &drop, spec.samples, rng)
                    .map_err(|e| format!("{e}"))?;
                let ok = match (&verdict, spec.expect.as_str()) {
                    (InjectivityVerdict::InjectiveAtSamples { .. }, "injective") => true,
                    (InjectivityVerdict::Counterexample { .. }, "counterexample") => true,
                    _ => false,
                };
                Ok((verdict, ok))
            };
            let mut rng = ctx.rng.clone();
            let result = run(&mut rng);
            ctx.rng = rng;
            match result {
                Ok((verdict, ok)) => {
                    let detail = match &verdict {
                        InjectivityVerdict::InjectiveAtSamples { samples } => {
                            format!("rank preserved at {samples} sample points")
                        }
                        InjectivityVerdict::Counterexample {
                            point,
                            rank_full,
                            rank_dropped,
                        } => format!(
                            "rank {rank_full} → {rank_dropped} at {}",
                            fmt_vec(point)
                        ),
                    };
                    if ok {
                        ctx.sampled(&name, detail);
                    } else {
                        ctx.fail(&name, detail);
                    }
                }
                Err(e) => ctx.fail(&name, e),
            }
        }
    }
}

fn stage_perturbation(ctx: &mut Ctx) {
    let sc = ctx.sc;
    let Some(p) = &sc.raw.perturbation_check else {
        return;
    };
    let (chart, gens) = dynamics::perturbation_generators(p.n);
    let name = "perturbation-generators";
    if chart.coords() != sc.chart.coords() {
        ctx.fail(name, "coordinate mismatch with scenario chart");
        return;
    }
    if gens.len() != sc.generator_names.len() {
        ctx.fail(
            name,
            format!(
                "{} generated fields vs {} scenario generators",
                gens.len(),
                sc.generator_names.len()
            ),
        );
        return;
    }
    for (g, gname) in gens.iter().zip(&sc.generator_names) {
        let expect = &sc.fields[gname];
        if g.comps() != expect.comps() {
            ctx.fail(name, format!("mismatch at {gname}"));
            return;
        }
    }
    ctx.pass(name, format!("emitted {} fields match the scenario list", gens.len()));
}

// ---------------------------------------------------------------------------
// Numerics
// ---------------------------------------------------------------------------

struct RunData {
    chart: Arc<Chart>,
    traj: Trajectory,
    param_values: Vec<f64>,
}

fn build_run(sc: &Scenario, raw: &RawRun, bindings: &BTreeMap<String, f64>) -> Result<RunData, String> {
    let (chart, fields, order): (Arc<Chart>, BTreeMap<String, VectorField>, Vec<String>) =
        if raw.system.as_deref() == Some("main") {
            (
                sc.chart.clone(),
                sc.fields.clone(),
                sc.generator_names.clone(),
            )
        } else {
            let rc = raw.chart.as_ref().ok_or("run needs a chart")?;
            let chart = Chart::new(
                &format!("run:{}", raw.name),
                &rc.coordinates,
                &rc.parameters,
                &rc.constraints,
            )
            .map_err(|e| format!("{e}"))?;
            let mut fields = BTreeMap::new();
            let mut order = Vec::new();
            for g in &raw.generators {
                let comps: Vec<RatFn> = g
                    .coeffs
                    .iter()
                    .map(|c| chart.parse(c))
                    .collect::<Result<_, _>>()
                    .map_err(|e| format!("{e}"))?;
                fields.insert(g.name.clone(), VectorField::new(&chart, comps));
                order.push(g.name.clone());
            }
            (chart, fields, order)
        };
    let coeffs = time_coeffs_for(&order, &raw.coeffs).map_err(|e| format!("{e}"))?;
    let gens: Vec<VectorField> = order.iter().map(|n| fields[n].clone()).collect();
    let field = TimeDependentField::new(gens, coeffs, bindings.clone());
    let method = match raw.method.as_deref() {
        Some("rk4") => Method::Rk4 {
            step: raw.step.unwrap_or(1e-3),
        },
        _ => Method::Rk45 {
            rtol: raw.rtol.unwrap_or(1e-9),
            atol: raw.atol.unwrap_or(1e-12),
            max_step: 1e-1,
        },
    };
    if raw.ic.len() != chart.dim() {
        return Err(format!(
            "run {}: initial condition arity {} != dimension {}",
            raw.name,
            raw.ic.len(),
            chart.dim()
        ));
    }
    let traj = dynamics::integrate(&field, &raw.ic, raw.t0, raw.t1, method, raw.points)
        .map_err(|e| format!("run {}: {e}", raw.name))?;
    let param_values: Vec<f64> = chart
        .params()
        .iter()
        .map(|p| *bindings.get(p).unwrap_or(&f64::NAN))
        .collect();
    Ok(RunData {
        chart,
        traj,
        param_values,
    })
}

fn apply_run_ref(data: &RunData, rr: &RawRunRef) -> Result<Trajectory, String> {
    match (&rr.take, &rr.map) {
        (Some(names), None) => {
            let idx: Vec<usize> = names
                .iter()
                .map(|n| {
                    data.chart
                        .coord_index(n)
                        .ok_or_else(|| format!("unknown coordinate {n}"))
                })
                .collect::<Result<_, _>>()?;
            let states = data
                .traj
                .states
                .iter()
                .map(|row| idx.iter().map(|&i| row[i]).collect())
                .collect();
            Ok(Trajectory {
                times: data.traj.times.clone(),
                states,
                method: data.traj.method.clone(),
            })
        }
        (None, Some(exprs)) => {
            let parsed: Vec<RatFn> = exprs
                .iter()
                .map(|t| data.chart.parse(t))
                .collect::<Result<_, _>>()
                .map_err(|e| format!("{e}"))?;
            dynamics::map_trajectory(&data.traj, &parsed, &data.param_values)
                .map_err(|e| format!("{e}"))
        }
        (None, None) => Ok(data.traj.clone()),
        _ => Err("give at most one of take, map".into()),
    }
}

fn stage_numerics(ctx: &mut Ctx) {
    let sc = ctx.sc;
    let Some(num) = &sc.raw.numerics else {
        return;
    };
    // Integrate all runs once.
    let mut runs: BTreeMap<String, RunData> = BTreeMap::new();
    for raw in &num.runs {
        match build_run(sc, raw, &num.bindings) {
            Ok(data) => {
                runs.insert(raw.name.clone(), data);
            }
            Err(e) => {
                ctx.fail(&format!("run:{}", raw.name), e);
            }
        }
    }
    ctx.pass(
        "numeric-runs",
        format!("{} of {} trajectories integrated", runs.len(), num.runs.len()),
    );

    // Drift checks.
    for d in &num.drifts {
        let name = format!("drift:{}", d.name);
        let run = || -> Result<(f64, usize), String> {
            let mut pieces = Vec::new();
            for rr in &d.runs {
                let data = runs.get(&rr.run).ok_or_else(|| format!("run {} failed", rr.run))?;
                pieces.push(apply_run_ref(data, rr)?);
            }
            let refs: Vec<&Trajectory> = pieces.iter().collect();
            let joint = dynamics::join(&refs).map_err(|e| format!("{e}"))?;
            // Variable context: declared coordinates plus main parameters.
            let mut names = d.coordinates.clone();
            names.extend(sc.chart.params().iter().cloned());
            let vars = Arc::new(names);
            let invs: Vec<RatFn> = d
                .invariants
                .iter()
                .map(|t| parse_rf(t, &vars))
                .collect::<Result<_, _>>()
                .map_err(|e| format!("{e}"))?;
            let params: Vec<f64> = sc
                .chart
                .params()
                .iter()
                .map(|p| *num.bindings.get(p).unwrap_or(&f64::NAN))
                .collect();
            let report = dynamics::drift(&joint, &invs, &params).map_err(|e| format!("{e}"))?;
            let worst = report
                .entries
                .iter()
                .map(|e| e.max_rel_drift)
                .fold(0.0_f64, f64::max);
            Ok((worst, invs.len()))
        };
        match run() {
            Ok((worst, n)) => ctx.check(
                &name,
                worst < d.max_rel,
                format!("max relative drift {worst:.3e} over {n} invariants (budget {:.1e})", d.max_rel),
            ),
            Err(e) => ctx.fail(&name, e),
        }
    }

    // Superposition reconstructions.
    let mut reconstructions: BTreeMap<String, Vec<Option<Vec<f64>>>> = BTreeMap::new();
    for s in &num.superpositions {
        let name = format!("superposition:{}", s.name);
        let run = |reconstructions: &BTreeMap<String, Vec<Option<Vec<f64>>>>|
         -> Result<(dynamics::ReconReport, String), String> {
            let rp = &sc.products[&s.product];
            let reference_data = runs
                .get(&s.reference.run)
                .ok_or_else(|| format!("run {} failed", s.reference.run))?;
            let reference = apply_run_ref(reference_data, &s.reference)?;
            let mut inputs = Vec::new();
            for rr in &s.inputs {
                let data = runs.get(&rr.run).ok_or_else(|| format!("run {} failed", rr.run))?;
                inputs.push(apply_run_ref(data, rr)?);
            }
            let input_refs: Vec<&Trajectory> = inputs.iter().collect();
            let rule_vars = SuperpositionRule::rule_vars_for(&rp.product, &s.constants);
            let exprs: Vec<ReconExpr> = s
                .exprs
                .iter()
                .map(|r| -> Result<ReconExpr, String> {
                    let rf = parse_rf(&r.text, &rule_vars).map_err(|e| format!("{e}"))?;
                    match r.kind.as_str() {
                        "rf" => Ok(ReconExpr::Rf(rf)),
                        "sqrt" => Ok(ReconExpr::SqrtSigned(rf)),
                        other => Err(format!("unknown reconstruction kind {other}")),
                    }
                })
                .collect::<Result<_, _>>()?;
            let invariants: Vec<RatFn> = s
                .invariants
                .iter()
                .map(|n| {
                    rp.invariants
                        .get(n)
                        .cloned()
                        .ok_or_else(|| format!("unknown invariant {n}"))
                })
                .collect::<Result<_, _>>()?;
            let rule = SuperpositionRule {
                product: rp.product.clone(),
                constants: s.constants.clone(),
                exprs,
                invariants,
                rule_vars,
            };
            let params: Vec<f64> = rp
                .product
                .chart
                .params()
                .iter()
                .map(|p| *num.bindings.get(p).unwrap_or(&f64::NAN))
                .collect();
            let report = dynamics::verify_superposition(
                &rule,
                &reference,
                &input_refs,
                &params,
                s.guard.unwrap_or(1e-9),
                s.value_cap.unwrap_or(1e12),
            )
            .map_err(|e| format!("{e}"))?;
            // Judge the outcome.
            let coverage = report.compared_points as f64 / report.total_points as f64;
            let min_cov = s.min_coverage.unwrap_or(0.99);
            if coverage < min_cov {
                return Err(format!(
                    "coverage {:.2} below minimum {:.2}",
                    coverage, min_cov
                ));
            }
            if report.sup_error >= s.tolerance {
                return Err(format!(
                    "sup error {:.3e} exceeds tolerance {:.1e} ({} of {} points)",
                    report.sup_error, s.tolerance, report.compared_points, report.total_points
                ));
            }
            if let (Some(tol), Some(end)) = (s.constant_drift_tol, &report.constants_end) {
                for (a, b) in report.constants.iter().zip(end) {
                    if (a - b).abs() > tol {
                        return Err(format!(
                            "constant drift {:.3e} exceeds {tol:.1e}",
                            (a - b).abs()
                        ));
                    }
                }
            }
            let mut detail = format!(
                "sup error {:.3e} on {}/{} points, constants {:?}",
                report.sup_error,
                report.compared_points,
                report.total_points,
                report
                    .constants
                    .iter()
                    .map(|k| format!("{k:.6}"))
                    .collect::<Vec<_>>()
            );
            if let Some(other) = &s.agrees_with {
                let Some(prev) = reconstructions.get(other) else {
                    return Err(format!("agrees_with references unknown reconstruction {other}"));
                };
                let mut max_diff: f64 = 0.0;
                for (a, b) in report.reconstruction.iter().zip(prev) {
                    if let (Some(ra), Some(rb)) = (a, b) {
                        for (x, y) in ra.iter().zip(rb) {
                            max_diff = max_diff.max((x - y).abs());
                        }
                    }
                }
                if max_diff > 1e-9 {
                    return Err(format!(
                        "disagrees with {other} by {max_diff:.3e} after rescaling"
                    ));
                }
                detail.push_str(&format!(", agrees with {other} to {max_diff:.1e}"));
            }
            Ok((report, detail))
        };
        match run(&reconstructions) {
            Ok((report, detail)) => {
                reconstructions.insert(s.name.clone(), report.reconstruction.clone());
                ctx.pass(&name, detail);
            }
            Err(e) => ctx.fail(&name, e),
        }
    }

    // Wronskian.
    if let Some(w) = &num.wronskian {
        let name = "wronskian";
        match (runs.get(&w.run_a), runs.get(&w.run_b)) {
            (Some(a), Some(b)) => match dynamics::wronskian_check(&a.traj, &b.traj) {
                Ok(entry) => ctx.check(
                    name,
                    entry.max_abs_drift < w.max_drift,
                    format!(
                        "W = {:.6}, drift {:.3e} (budget {:.1e})",
                        entry.initial, entry.max_abs_drift, w.max_drift
                    ),
                ),
                Err(e) => ctx.fail(name, format!("{e}")),
            },
            _ => ctx.fail(name, "missing runs"),
        }
    }
}
