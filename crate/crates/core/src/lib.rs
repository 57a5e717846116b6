//! Critical unstable qubits in the co-decaying Bloch representation.
//!
//! A two-level system evolved by a non-Hermitian effective Hamiltonian
//! `H = E - (i/2) Γ` is described, after trace normalisation, by a Bloch
//! vector `b` with `|b| <= 1` obeying
//!
//! ```text
//! db/dτ = -(1/r) e × b + γ - (b·γ) b,     τ = |Γ| t,   r = |Γ| / (2|E|)
//! ```
//!
//! The crate is split by concern:
//!
//! - [`bloch`]: state and model types, the right-hand side above and the
//!   equivalent density-matrix form.
//! - [`integrate`]: adaptive Dormand–Prince integration with dense output.
//! - [`analytic`]: closed-form periods, projections, asymptotic states and
//!   the mixed-state ellipse.
//! - [`fourier`]: closed-form and quadrature Fourier spectra, anharmonicity
//!   factors and their inversion to `r`.
//! - [`meson`]: meson-mixing observables `(ΔE, ΔΓ, |q/p|)` and the
//!   catalogue of known systems.
//! - [`fit`]: weighted least-squares Fourier fits of flavour-asymmetry data.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod bloch;
mod error;
pub mod fit;
pub mod fourier;
pub mod integrate;
pub mod meson;
pub mod quadrature;

pub use error::{Error, Result};

/// Real 3-vector used for Bloch, energy and decay directions.
pub type Vec3 = nalgebra::Vector3<f64>;
