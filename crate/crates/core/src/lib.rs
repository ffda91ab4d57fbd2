//! Numerical laboratory for periodic Schrödinger operators on cylinders `M × ℝᵐ`.
//!
//! The crate assembles truncated Floquet–Bloch fiber operators `H(ξ)` in the
//! joint eigenbasis `φ_j(x) e^{i⟨n,y⟩}`, evaluates them along the complexified
//! quasimomentum line `(π + iτ) b₁ + ξ′`, and measures the quantities that
//! control the resolvent decay `‖(H(τ) − λ)⁻¹‖ ≤ C/|τ|`: free eigenvalues,
//! spectral-cluster `L² → L^q` norms, the cluster summation bounds, level
//! splitting of the potential and weighted boundary traces.
//!
//! Module map:
//!
//! - [`lattice`]: period lattice, dual lattice, dual-point enumeration.
//! - [`cross_section`]: closed-form eigenpairs and quadrature on `M`.
//! - [`free_operator`]: eigenvalues `h_{j,n}(τ)` of the free fiber operator.
//! - [`potential`]: periodic potentials, Robin data, `L_p` norms and splitting.
//! - [`galerkin`]: truncated fiber matrices, band functions, resolvent norms.
//! - [`cluster`]: spectral clusters, cluster norms, exponent fits, lemma sums.
//! - [`thomas`]: resolvent decay scans, the polar-decomposition probe, band
//!   non-constancy indicator and boundary-trace decay.

pub mod cluster;
pub mod cross_section;
pub mod error;
pub mod fit;
pub mod free_operator;
pub mod galerkin;
pub mod lattice;
pub mod linalg;
pub mod potential;
pub mod quadrature;
pub mod rng;
pub mod thomas;

pub use error::{LabError, Result};
pub use num_complex::Complex64;
