//! Certified computation of Reeb-flow invariants on ellipsoid boundaries and
//! two-torus Reeb flows: action spectra, Conley-Zehnder / Robbin-Salamon
//! indices, generalized least common multiples, simultaneous Dirichlet
//! approximation with interval certificates, the graded algebra model of the
//! contact homology of a sphere with its U-map derivations and spectral-gap
//! witnesses, and floating-point flow numerics (exact ellipsoid flows,
//! torus-invariant perturbations, period detection, closing searches).
//!
//! All ordering, lcm and certificate decisions are made over exact rationals
//! or certified interval enclosures of declared irrational constants; floats
//! appear only in the `flow` and `index` numerics, which are cross-checked
//! against the exact layers by the test suites.

pub mod certified;
pub mod chmodel;
pub mod diophantine;
pub mod flow;
pub mod index;
pub mod spectrum;

pub use certified::{Budget, CertifiedError, CertifiedReal, SymbolicConstant};
pub use spectrum::{ActionSpectrum, Ellipsoid, OrbitLabel, Period};
