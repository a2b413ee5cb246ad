//! Exact symbolic and numeric machinery for Lie systems: vector-field Lie
//! algebras over the rational-function field, exterior calculus, Hamiltonian
//! structures (symplectic, presymplectic, contact, Poisson, Jacobi), dual-space
//! Poisson coalgebra constructions, time-dependent integration, and
//! verification of mixed superposition rules.
//!
//! All symbolic computation is carried out over ℚ with canonical normal forms,
//! so equality of fields, forms, brackets, and invariants is decidable and
//! structural. Floating point only enters through the numeric integrators in
//! [`dynamics`].

pub mod coalg;
pub mod dynamics;
pub mod exprs;
pub mod geometry;
pub mod liealg;
pub mod linalg;
pub mod scenario;
pub mod structures;

pub use exprs::{MultiPoly, RatFn, Rational, TimeExpr};
pub use geometry::{Chart, DifferentialForm, ProductChart, VectorField};
