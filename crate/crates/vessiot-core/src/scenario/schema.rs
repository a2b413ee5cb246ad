//! Serde schema of scenario files (JSON, version 1). Expression-valued
//! fields are strings in the shared grammar; cross-references are by name.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub chart: RawChart,
    pub generators: Vec<RawField>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub t_coefficients: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub derived_fields: Vec<RawDerived>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<RawExpected>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub locally_automorphic: Vec<RawLocAut>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub symmetries: Vec<RawSymmetry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub semidirect: Vec<RawSemidirect>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subalgebra_checks: Vec<RawSubalgebraCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invariant_forms: Option<RawInvariantForms>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub structures: Vec<RawStructure>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub algebras: Vec<RawAlgebra>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub momentum_maps: Vec<RawMomentumMap>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub products: Vec<RawProduct>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pullback_invariants: Vec<RawPullback>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub identities: Vec<RawIdentity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation_check: Option<RawPerturbation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numerics: Option<RawNumerics>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawChart {
    pub coordinates: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parameters: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawField {
    pub name: String,
    pub coeffs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDerived {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combo: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawExpected {
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub commutation_table: Vec<RawBracket>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawBracket {
    pub lhs: String,
    pub rhs: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub result: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLocAut {
    pub fields: Vec<String>,
    pub expect: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSymmetry {
    pub algebra: Vec<String>,
    pub candidates: Vec<String>,
    pub expect: Vec<bool>,
}

/// A Lie-algebra element: a generator name or a ℚ-combination of generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawElement {
    Name(String),
    Combo(BTreeMap<String, String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSemidirect {
    pub name: String,
    pub part1: Vec<RawElement>,
    pub part2: Vec<RawElement>,
    pub expect: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSubalgebraCheck {
    pub name: String,
    pub fields: Vec<RawElement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_subalgebra: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_ideal: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_abelian: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInvariantForms {
    pub frame_fields: Vec<String>,
    pub extra_fields: Vec<String>,
    pub expected_basis: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_frame: Option<Vec<Vec<String>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawStructure {
    pub name: String,
    /// "symplectic" | "presymplectic" | "contact" | "bivector" |
    /// "exact_presymplectic" (ω = d of the given one-form)
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinates: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart: Option<RawChart>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub one_form: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub two_form: Vec<RawFormTerm>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bivector: Vec<RawFormTerm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reeb: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub hamiltonians: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra_functions: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bracket_table: Vec<RawBracket>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub liouville: Option<bool>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub jacobi_pair: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub dirac_equivalence: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFormTerm {
    pub i: String,
    pub j: String,
    pub coeff: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAlgebra {
    pub name: String,
    pub basis: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub brackets: Vec<RawBracket>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub casimirs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMomentumMap {
    pub name: String,
    pub algebra: String,
    pub structure: String,
    pub map: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawProduct {
    pub name: String,
    pub blocks: Vec<RawBlock>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub generators: Vec<RawExtGen>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub invariants: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub injectivity: Vec<RawInjectivity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawBlock {
    pub tag: String,
    /// Main-chart coordinates this block keeps; `None` = the full chart.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinates: Option<Vec<String>>,
    /// Explicit coordinate names on the product chart; default `name_(tag)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawExtGen {
    pub name: String,
    pub from: String,
    pub blocks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInjectivity {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop_block: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop_coordinates: Option<Vec<String>>,
    pub samples: usize,
    /// "injective" or "counterexample"
    pub expect: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawProlong {
    pub full: usize,
    pub sub: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subalgebra: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPullback {
    pub name: String,
    pub algebra: String,
    pub casimir: String,
    pub prolong: RawProlong,
    /// Extend the copy layout with additional subalgebra copies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extend_sub_copies: Option<usize>,
    /// Swaps of copy numbers (1-based), applied in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub permute: Vec<Vec<usize>>,
    pub assignments: Vec<RawAssignRef>,
    pub product: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<String>,
    /// Verify the result as a constant of motion of this product's generators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub register_on: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum RawIdentity {
    /// Prolonged field applied to a named invariant equals the square of
    /// another named invariant.
    #[serde(rename = "derived_square")]
    DerivedSquare {
        product: String,
        field: String,
        blocks: Vec<String>,
        of: String,
        sqrt: String,
    },
    /// result = scale · Π factors, as named invariants of a product.
    #[serde(rename = "product_of_invariants")]
    ProductOfInvariants {
        product: String,
        result: String,
        factors: Vec<String>,
        scale: String,
    },
}

/// One momentum assignment per dual copy: lifted onto a product block when
/// `block` is given, otherwise matched by coordinate names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAssignRef {
    pub map: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPerturbation {
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNumerics {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub bindings: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub runs: Vec<RawRun>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub drifts: Vec<RawDrift>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub superpositions: Vec<RawSuperposition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wronskian: Option<RawWronskian>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRun {
    pub name: String,
    /// "main" to use the scenario chart and generators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart: Option<RawChart>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub generators: Vec<RawField>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub coeffs: BTreeMap<String, String>,
    pub ic: Vec<f64>,
    pub t0: f64,
    pub t1: f64,
    pub points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rtol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRunRef {
    pub run: String,
    /// Select coordinates of the run's chart by name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub take: Option<Vec<String>>,
    /// Or map the run's state through expressions of its coordinates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDrift {
    pub name: String,
    pub runs: Vec<RawRunRef>,
    /// Variable context for the invariant expressions: the concatenated
    /// output coordinates of the runs.
    pub coordinates: Vec<String>,
    pub invariants: Vec<String>,
    pub max_rel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRecon {
    /// "rf" or "sqrt"
    pub kind: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSuperposition {
    pub name: String,
    pub product: String,
    pub reference: RawRunRef,
    pub inputs: Vec<RawRunRef>,
    pub constants: Vec<String>,
    /// Names into the product's invariant table (constant-defining closed
    /// form); empty = numeric root-finding at t0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub invariants: Vec<String>,
    pub exprs: Vec<RawRecon>,
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_coverage: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant_drift_tol: Option<f64>,
    /// Optional: reconstructions that must agree with this one pointwise
    /// (e.g. a rescaled form of the same rule).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agrees_with: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawWronskian {
    pub run_a: String,
    pub run_b: String,
    pub max_drift: f64,
}
