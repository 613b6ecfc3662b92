//! Exact simulation of measurement-assisted duality transformations of
//! Trotterized lattice-model time evolutions.
//!
//! The library builds the six dualization pipelines (Kramers-Wannier on
//! square and triangular tori, plain, twisted and ℤ_N; the gauge-matter
//! Kramers-Wannier and Jordan-Wigner maps on the cycle; and the
//! Fradkin-Shenker map) and verifies, branch by measurement branch, the
//! operator identity
//!
//! ```text
//! O_bp · T^{M*}(t) |ψ_gauged⟩ = Map · T^{M}(t) |ψ_ungauged⟩
//! ```
//!
//! at desk scale with dense statevectors.
//!
//! Module map: [`complex`] (cell complexes and chain algebra), [`weyl`]
//! (generalized Pauli strings and Jordan-Wigner encoding), [`engine`]
//! (dense statevector simulator), [`models`] (Hamiltonians and Trotter
//! schedules), [`dualizer`] (entangler + measurement + correction
//! pipelines) and [`lab`] (experiment harnesses and reports).

pub mod complex;
pub mod dualizer;
pub mod engine;
pub mod lab;
pub mod models;
pub mod weyl;

pub use complex::{CellComplex, Chain, ComplexError, LatticeKind, PairingPolicy};
pub use engine::{EngineError, GateStep, RegisterLayout, StateVector};
pub use weyl::{jw_encode, Bilinear, FermionLayout, PauliKind, WeylError, WeylString};
