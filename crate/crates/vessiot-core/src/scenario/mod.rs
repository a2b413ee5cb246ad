//! Declarative scenario files, the built-in registry of worked examples, and
//! the orchestration that runs every check of a scenario into a report.

pub mod schema;
mod run;

pub use run::{run_all, CheckResult, Report, Status};
pub use schema::RawScenario;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::coalg::{AbstractLieAlgebra, CoalgError, MomentumAssignment, PolyOnDual, ProductDual};
use crate::exprs::{parse_rf, parse_time, ExprError, RatFn, Rational, TimeExpr};
use crate::geometry::{
    pushforward_projection, Chart, DifferentialForm, GeomError, ProductChart, VectorField,
};
use crate::structures::{Bivector, StructError, StructurePresentation};

use schema::*;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("expression error in {context}: {source}")]
    Parse {
        context: String,
        #[source]
        source: ExprError,
    },
    #[error("dangling reference `{0}`")]
    DanglingReference(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Struct(#[from] StructError),
    #[error(transparent)]
    Coalg(#[from] CoalgError),
    #[error("io error: {0}")]
    Io(String),
}

pub type ScenarioResult<T> = Result<T, ScenarioError>;

fn ctx<T>(context: &str, r: Result<T, ExprError>) -> ScenarioResult<T> {
    r.map_err(|source| ScenarioError::Parse {
        context: context.to_string(),
        source,
    })
}

/// A fully resolved scenario: every expression parsed, every reference
/// checked.
pub struct Scenario {
    pub raw: RawScenario,
    pub chart: Arc<Chart>,
    pub generator_names: Vec<String>,
    /// Generators followed by derived fields, by name.
    pub fields: BTreeMap<String, VectorField>,
    pub structures: BTreeMap<String, ResolvedStructure>,
    pub algebras: BTreeMap<String, ResolvedAlgebra>,
    pub momentum_maps: BTreeMap<String, MomentumAssignment>,
    pub products: BTreeMap<String, ResolvedProduct>,
}

pub struct ResolvedStructure {
    pub chart: Arc<Chart>,
    /// When the structure lives on a coordinate projection of the main
    /// chart, the kept coordinates (fields are pushed forward for checks).
    pub sub_coords: Option<Vec<String>>,
    pub presentation: StructurePresentation,
    pub hamiltonians: Vec<(String, RatFn)>,
    pub extra_functions: BTreeMap<String, RatFn>,
    pub expected_volume: Option<RatFn>,
    pub expected_reeb: Option<VectorField>,
}

pub struct ResolvedAlgebra {
    pub algebra: Arc<AbstractLieAlgebra>,
    pub casimirs: BTreeMap<String, PolyOnDual>,
}

pub struct ResolvedProduct {
    pub product: ProductChart,
    /// Kept main-chart coordinates per block (`None` = full chart).
    pub block_coords: Vec<Option<Vec<String>>>,
    pub block_tags: Vec<String>,
    pub generators: Vec<(String, VectorField)>,
    pub invariants: BTreeMap<String, RatFn>,
}

impl Scenario {
    pub fn field(&self, name: &str) -> ScenarioResult<&VectorField> {
        self.fields
            .get(name)
            .ok_or_else(|| ScenarioError::DanglingReference(name.to_string()))
    }

    pub fn fields_named(&self, names: &[String]) -> ScenarioResult<Vec<VectorField>> {
        names.iter().map(|n| self.field(n).cloned()).collect()
    }

    /// Resolve a name-or-combination element into a coefficient vector over
    /// the generator basis.
    pub fn element_vector(&self, e: &RawElement) -> ScenarioResult<Vec<Rational>> {
        let n = self.generator_names.len();
        let mut v = vec![Rational::from_integer(0.into()); n];
        let mut add = |name: &str, c: Rational| -> ScenarioResult<()> {
            let idx = self
                .generator_names
                .iter()
                .position(|g| g == name)
                .ok_or_else(|| ScenarioError::DanglingReference(name.to_string()))?;
            v[idx] = c;
            Ok(())
        };
        match e {
            RawElement::Name(name) => add(name, Rational::from_integer(1.into()))?,
            RawElement::Combo(combo) => {
                for (name, coeff) in combo {
                    add(name, parse_rational(coeff)?)?;
                }
            }
        }
        Ok(v)
    }
}

fn parse_rational(text: &str) -> ScenarioResult<Rational> {
    schema_rational(text).map_err(ScenarioError::Schema)
}

/// Parse a rational constant literal like "-4" or "1/2".
pub(crate) fn schema_rational(text: &str) -> Result<Rational, String> {
    let vars = crate::exprs::varset::<&str>(&[]);
    let rf = parse_rf(text, &vars).map_err(|e| format!("`{text}`: {e}"))?;
    rf.as_constant()
        .ok_or_else(|| format!("`{text}` is not a rational constant"))
}

/// Parse and fully resolve a scenario from JSON text.
pub fn load_scenario_str(json: &str) -> ScenarioResult<Scenario> {
    let raw: RawScenario =
        serde_json::from_str(json).map_err(|e| ScenarioError::Schema(e.to_string()))?;
    if raw.schema_version != 1 {
        return Err(ScenarioError::Schema(format!(
            "unsupported schema version {}",
            raw.schema_version
        )));
    }
    resolve(raw)
}

/// Load a scenario from a file path.
pub fn load_scenario(path: &std::path::Path) -> ScenarioResult<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(e.to_string()))?;
    load_scenario_str(&text)
}

/// The bundled scenario registry.
pub fn builtin(name: &str) -> Option<&'static str> {
    match name {
        "riccati3d" => Some(include_str!("../../scenarios/riccati3d.json")),
        "riccati-mixed" => Some(include_str!("../../scenarios/riccati-mixed.json")),
        "schrodinger" => Some(include_str!("../../scenarios/schrodinger.json")),
        "oscillator-riccati" => Some(include_str!("../../scenarios/oscillator-riccati.json")),
        "calogero-moser" => Some(include_str!("../../scenarios/calogero-moser.json")),
        "thermo" => Some(include_str!("../../scenarios/thermo.json")),
        "pde-vg-n2" => Some(include_str!("../../scenarios/pde-vg-n2.json")),
        "affine-linear" => Some(include_str!("../../scenarios/affine-linear.json")),
        _ => None,
    }
}

pub fn builtin_names() -> Vec<&'static str> {
    vec![
        "riccati3d",
        "riccati-mixed",
        "schrodinger",
        "oscillator-riccati",
        "calogero-moser",
        "thermo",
        "pde-vg-n2",
        "affine-linear",
    ]
}

/// Load a scenario by builtin name or filesystem path.
pub fn load_by_name_or_path(spec: &str) -> ScenarioResult<Scenario> {
    if let Some(text) = builtin(spec) {
        load_scenario_str(text)
    } else {
        load_scenario(std::path::Path::new(spec))
    }
}

fn build_chart(name: &str, raw: &RawChart) -> ScenarioResult<Arc<Chart>> {
    Ok(Chart::new(
        name,
        &raw.coordinates,
        &raw.parameters,
        &raw.constraints,
    )?)
}

fn resolve(raw: RawScenario) -> ScenarioResult<Scenario> {
    let chart = build_chart(&raw.name, &raw.chart)?;

    // Generators and derived fields.
    let mut fields: BTreeMap<String, VectorField> = BTreeMap::new();
    let mut generator_names = Vec::new();
    for g in &raw.generators {
        if g.coeffs.len() != chart.dim() {
            return Err(ScenarioError::Schema(format!(
                "generator {} has {} coefficients on a {}-dimensional chart",
                g.name,
                g.coeffs.len(),
                chart.dim()
            )));
        }
        let comps: Vec<RatFn> = g
            .coeffs
            .iter()
            .map(|c| ctx(&format!("generator {}", g.name), parse_rf(c, chart.vars())))
            .collect::<ScenarioResult<_>>()?;
        let f = VectorField::new(&chart, comps);
        generator_names.push(g.name.clone());
        if fields.insert(g.name.clone(), f).is_some() {
            return Err(ScenarioError::Schema(format!("duplicate field {}", g.name)));
        }
    }
    for d in &raw.derived_fields {
        let f = match (&d.combo, &d.coeffs) {
            (Some(combo), None) => {
                let mut acc = VectorField::zero(&chart);
                for (name, coeff) in combo {
                    let base = fields
                        .get(name)
                        .ok_or_else(|| ScenarioError::DanglingReference(name.clone()))?;
                    acc = acc.add(&base.scale(&parse_rational(coeff)?))?;
                }
                acc
            }
            (None, Some(coeffs)) => {
                let comps: Vec<RatFn> = coeffs
                    .iter()
                    .map(|c| ctx(&format!("derived field {}", d.name), parse_rf(c, chart.vars())))
                    .collect::<ScenarioResult<_>>()?;
                VectorField::new(&chart, comps)
            }
            _ => {
                return Err(ScenarioError::Schema(format!(
                    "derived field {} must have exactly one of `combo`, `coeffs`",
                    d.name
                )))
            }
        };
        if fields.insert(d.name.clone(), f).is_some() {
            return Err(ScenarioError::Schema(format!("duplicate field {}", d.name)));
        }
    }

    // Structures.
    let mut structures = BTreeMap::new();
    for s in &raw.structures {
        let (schart, sub_coords) = match (&s.chart, &s.coordinates) {
            (Some(aux), None) => (build_chart(&format!("{}:{}", raw.name, s.name), aux)?, None),
            (None, Some(coords)) => {
                // Sub-chart keeps the main parameters.
                let sub = Chart::new(
                    &format!("{}|{}", raw.name, s.name),
                    coords,
                    &chart.params().to_vec(),
                    &s.constraints,
                )?;
                (sub, Some(coords.clone()))
            }
            (None, None) => (chart.clone(), None),
            _ => {
                return Err(ScenarioError::Schema(format!(
                    "structure {}: give at most one of `chart`, `coordinates`",
                    s.name
                )))
            }
        };
        let parse_form_terms = |terms: &[RawFormTerm]| -> ScenarioResult<DifferentialForm> {
            let mut w = DifferentialForm::zero(&schart, 2);
            for t in terms {
                let i = schart
                    .coord_index(&t.i)
                    .ok_or_else(|| ScenarioError::DanglingReference(t.i.clone()))?;
                let j = schart
                    .coord_index(&t.j)
                    .ok_or_else(|| ScenarioError::DanglingReference(t.j.clone()))?;
                let c = ctx(
                    &format!("structure {}", s.name),
                    parse_rf(&t.coeff, schart.vars()),
                )?;
                w.add_term(vec![i as u8, j as u8], c);
            }
            Ok(w)
        };
        let parse_one_form = |comps: &[String]| -> ScenarioResult<DifferentialForm> {
            if comps.len() != schart.dim() {
                return Err(ScenarioError::Schema(format!(
                    "structure {}: one-form arity {} != chart dimension {}",
                    s.name,
                    comps.len(),
                    schart.dim()
                )));
            }
            let c: Vec<RatFn> = comps
                .iter()
                .map(|t| ctx(&format!("structure {}", s.name), parse_rf(t, schart.vars())))
                .collect::<ScenarioResult<_>>()?;
            Ok(DifferentialForm::one_form(&schart, c))
        };
        let presentation = match s.kind.as_str() {
            "symplectic" => StructurePresentation::Symplectic(parse_form_terms(&s.two_form)?),
            "presymplectic" => StructurePresentation::Presymplectic(parse_form_terms(&s.two_form)?),
            "contact" => {
                let eta = parse_one_form(s.one_form.as_deref().ok_or_else(|| {
                    ScenarioError::Schema(format!("structure {}: contact needs one_form", s.name))
                })?)?;
                StructurePresentation::Contact(eta)
            }
            "exact_presymplectic" => {
                let eta = parse_one_form(s.one_form.as_deref().ok_or_else(|| {
                    ScenarioError::Schema(format!(
                        "structure {}: exact_presymplectic needs one_form",
                        s.name
                    ))
                })?)?;
                StructurePresentation::Presymplectic(eta.exterior_derivative())
            }
            "bivector" => {
                let mut l = Bivector::zero(&schart);
                for t in &s.bivector {
                    let i = schart
                        .coord_index(&t.i)
                        .ok_or_else(|| ScenarioError::DanglingReference(t.i.clone()))?;
                    let j = schart
                        .coord_index(&t.j)
                        .ok_or_else(|| ScenarioError::DanglingReference(t.j.clone()))?;
                    let c = ctx(
                        &format!("structure {}", s.name),
                        parse_rf(&t.coeff, schart.vars()),
                    )?;
                    l.set(i, j, c);
                }
                StructurePresentation::PoissonBivector(l)
            }
            other => {
                return Err(ScenarioError::Schema(format!(
                    "structure {}: unknown kind `{other}`",
                    s.name
                )))
            }
        };
        let mut hamiltonians = Vec::new();
        for (gen, text) in &s.hamiltonians {
            if !fields.contains_key(gen) {
                return Err(ScenarioError::DanglingReference(gen.clone()));
            }
            let h = ctx(
                &format!("hamiltonian {gen} of structure {}", s.name),
                parse_rf(text, schart.vars()),
            )?;
            hamiltonians.push((gen.clone(), h));
        }
        let mut extra_functions = BTreeMap::new();
        for (name, text) in &s.extra_functions {
            extra_functions.insert(
                name.clone(),
                ctx(
                    &format!("extra function {name}"),
                    parse_rf(text, schart.vars()),
                )?,
            );
        }
        let expected_volume = match &s.volume {
            Some(v) => Some(ctx(
                &format!("volume of {}", s.name),
                parse_rf(v, schart.vars()),
            )?),
            None => None,
        };
        let expected_reeb = match &s.reeb {
            Some(comps) => {
                let c: Vec<RatFn> = comps
                    .iter()
                    .map(|t| ctx(&format!("reeb of {}", s.name), parse_rf(t, schart.vars())))
                    .collect::<ScenarioResult<_>>()?;
                Some(VectorField::new(&schart, c))
            }
            None => None,
        };
        structures.insert(
            s.name.clone(),
            ResolvedStructure {
                chart: schart,
                sub_coords,
                presentation,
                hamiltonians,
                extra_functions,
                expected_volume,
                expected_reeb,
            },
        );
    }

    // Abstract algebras and Casimirs.
    let mut algebras = BTreeMap::new();
    for a in &raw.algebras {
        let pos = |name: &str| -> ScenarioResult<usize> {
            a.basis
                .iter()
                .position(|b| b == name)
                .ok_or_else(|| ScenarioError::DanglingReference(name.to_string()))
        };
        let mut brackets = Vec::new();
        for b in &a.brackets {
            let i = pos(&b.lhs)?;
            let j = pos(&b.rhs)?;
            let mut terms = Vec::new();
            for (k, c) in &b.result {
                terms.push((pos(k)?, parse_rational(c)?));
            }
            brackets.push(((i, j), terms));
        }
        let algebra = AbstractLieAlgebra::new(&a.name, &a.basis, &brackets)?;
        let dual = ProductDual::single(&algebra);
        let mut casimirs = BTreeMap::new();
        for (name, text) in &a.casimirs {
            casimirs.insert(name.clone(), PolyOnDual::parse(&dual, text)?);
        }
        algebras.insert(a.name.clone(), ResolvedAlgebra { algebra, casimirs });
    }

    // Momentum maps.
    let mut momentum_maps = BTreeMap::new();
    for m in &raw.momentum_maps {
        let alg = algebras
            .get(&m.algebra)
            .ok_or_else(|| ScenarioError::DanglingReference(m.algebra.clone()))?;
        let st = structures
            .get(&m.structure)
            .ok_or_else(|| ScenarioError::DanglingReference(m.structure.clone()))?;
        let mut map = BTreeMap::new();
        for (basis_name, text) in &m.map {
            let idx = alg
                .algebra
                .basis
                .iter()
                .position(|b| b == basis_name)
                .ok_or_else(|| ScenarioError::DanglingReference(basis_name.clone()))?;
            map.insert(
                idx,
                ctx(
                    &format!("momentum map {}", m.name),
                    parse_rf(text, st.chart.vars()),
                )?,
            );
        }
        momentum_maps.insert(
            m.name.clone(),
            MomentumAssignment {
                algebra: alg.algebra.clone(),
                structure: st.presentation.clone(),
                map,
            },
        );
    }

    // Products.
    let mut products = BTreeMap::new();
    for p in &raw.products {
        let mut factors: Vec<(Arc<Chart>, Vec<String>)> = Vec::new();
        let mut block_coords = Vec::new();
        let mut block_tags = Vec::new();
        for b in &p.blocks {
            let factor = match &b.coordinates {
                None => chart.clone(),
                Some(coords) => Chart::new(
                    &format!("{}|{}", raw.name, coords.join(",")),
                    coords,
                    &chart.params().to_vec(),
                    &Vec::<String>::new(),
                )?,
            };
            let names = match &b.names {
                Some(names) => {
                    if names.len() != factor.dim() {
                        return Err(ScenarioError::Schema(format!(
                            "product {}: block {} name arity mismatch",
                            p.name, b.tag
                        )));
                    }
                    names.clone()
                }
                None => factor
                    .coords()
                    .iter()
                    .map(|c| format!("{c}_({})", b.tag))
                    .collect(),
            };
            block_coords.push(b.coordinates.clone());
            block_tags.push(b.tag.clone());
            factors.push((factor, names));
        }
        let product = ProductChart::with_names(&format!("{}:{}", raw.name, p.name), &factors)?;
        let mut generators = Vec::new();
        for g in &p.generators {
            let base = fields
                .get(&g.from)
                .ok_or_else(|| ScenarioError::DanglingReference(g.from.clone()))?;
            let mut acc = VectorField::zero(&product.chart);
            for tag in &g.blocks {
                let bi = block_tags
                    .iter()
                    .position(|t| t == tag)
                    .ok_or_else(|| ScenarioError::DanglingReference(format!("block {tag}")))?;
                let factor_field = match &block_coords[bi] {
                    None => base.clone(),
                    Some(coords) => {
                        let projected = pushforward_projection(base, coords).map_err(|e| {
                            ScenarioError::Schema(format!(
                                "product {}: generator {}: {e}",
                                p.name, g.name
                            ))
                        })?;
                        // Rebuild on the stored factor chart (identical data).
                        VectorField::new(
                            &product.block(bi).factor,
                            projected.comps().to_vec(),
                        )
                    }
                };
                acc = acc.add(&product.lift_field(&factor_field, bi)?)?;
            }
            generators.push((g.name.clone(), acc));
        }
        let mut invariants = BTreeMap::new();
        for (name, text) in &p.invariants {
            invariants.insert(
                name.clone(),
                ctx(
                    &format!("invariant {name} of product {}", p.name),
                    parse_rf(text, product.chart.vars()),
                )?,
            );
        }
        products.insert(
            p.name.clone(),
            ResolvedProduct {
                product,
                block_coords,
                block_tags,
                generators,
                invariants,
            },
        );
    }

    // Validate remaining cross-references early.
    for pb in &raw.pullback_invariants {
        let alg = algebras
            .get(&pb.algebra)
            .ok_or_else(|| ScenarioError::DanglingReference(pb.algebra.clone()))?;
        if !alg.casimirs.contains_key(&pb.casimir) {
            return Err(ScenarioError::DanglingReference(pb.casimir.clone()));
        }
        for a in &pb.assignments {
            if !momentum_maps.contains_key(&a.map) {
                return Err(ScenarioError::DanglingReference(a.map.clone()));
            }
        }
        if !products.contains_key(&pb.product) {
            return Err(ScenarioError::DanglingReference(pb.product.clone()));
        }
        for s in &pb.prolong.subalgebra {
            if !alg.algebra.basis.contains(s) {
                return Err(ScenarioError::DanglingReference(s.clone()));
            }
        }
    }
    if let Some(n) = &raw.numerics {
        let mut run_names = BTreeSet::new();
        for r in &n.runs {
            run_names.insert(r.name.clone());
            match (&r.system, &r.chart) {
                (Some(s), None) if s == "main" => {
                    for key in r.coeffs.keys() {
                        if !fields.contains_key(key) {
                            return Err(ScenarioError::DanglingReference(key.clone()));
                        }
                    }
                }
                (None, Some(_)) => {
                    for key in r.coeffs.keys() {
                        if !r.generators.iter().any(|g| &g.name == key) {
                            return Err(ScenarioError::DanglingReference(key.clone()));
                        }
                    }
                }
                _ => {
                    return Err(ScenarioError::Schema(format!(
                        "run {}: give `system: main` or an inline chart",
                        r.name
                    )))
                }
            }
            // Time expressions must parse.
            for (key, text) in &r.coeffs {
                ctx(&format!("run {} coefficient {key}", r.name), parse_time(text)).map(|_| ())?;
            }
        }
        for d in &n.drifts {
            for rr in &d.runs {
                if !run_names.contains(&rr.run) {
                    return Err(ScenarioError::DanglingReference(rr.run.clone()));
                }
            }
        }
        for s in &n.superpositions {
            if !products.contains_key(&s.product) {
                return Err(ScenarioError::DanglingReference(s.product.clone()));
            }
            if !run_names.contains(&s.reference.run) {
                return Err(ScenarioError::DanglingReference(s.reference.run.clone()));
            }
            for rr in &s.inputs {
                if !run_names.contains(&rr.run) {
                    return Err(ScenarioError::DanglingReference(rr.run.clone()));
                }
            }
        }
        if let Some(w) = &n.wronskian {
            for r in [&w.run_a, &w.run_b] {
                if !run_names.contains(r) {
                    return Err(ScenarioError::DanglingReference(r.clone()));
                }
            }
        }
    }

    Ok(Scenario {
        raw,
        chart,
        generator_names,
        fields,
        structures,
        algebras,
        momentum_maps,
        products,
    })
}

/// Parse a time-coefficient map into per-generator expressions, defaulting to
/// zero for absent names.
pub fn time_coeffs_for(
    names: &[String],
    coeffs: &BTreeMap<String, String>,
) -> ScenarioResult<Vec<TimeExpr>> {
    let mut out = Vec::with_capacity(names.len());
    for n in names {
        match coeffs.get(n) {
            Some(text) => out.push(ctx(&format!("coefficient {n}"), parse_time(text))?),
            None => out.push(TimeExpr::zero()),
        }
    }
    Ok(out)
}
