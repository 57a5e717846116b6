//! State and model types for the co-decaying Bloch vector, the master
//! evolution equation, and the equivalent 2×2 density-matrix form.

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec3};

/// Slack allowed on `|b| <= 1` for states built from numerical output.
pub const STATE_TOLERANCE: f64 = 1e-9;

/// Tolerance for exact algebraic identities (unit vectors, hermiticity).
pub const IDENTITY_TOLERANCE: f64 = 1e-12;

/// The co-decaying Bloch vector at dimensionless time `tau = |Γ| t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochState {
    b: Vec3,
    tau: f64,
}

impl BlochState {
    pub fn new(b: Vec3, tau: f64) -> Result<Self> {
        Self::with_tolerance(b, tau, STATE_TOLERANCE)
    }

    pub fn with_tolerance(b: Vec3, tau: f64, tolerance: f64) -> Result<Self> {
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::param("tau", tau, "must be finite and non-negative"));
        }
        let norm = b.norm();
        if !norm.is_finite() || norm > 1.0 + tolerance {
            return Err(Error::BlochNorm { norm, tolerance });
        }
        Ok(Self { b, tau })
    }

    /// Fully mixed state `b = 0` at `tau = 0`.
    pub fn mixed() -> Self {
        Self {
            b: Vec3::zeros(),
            tau: 0.0,
        }
    }

    pub(crate) fn unchecked(b: Vec3, tau: f64) -> Self {
        Self { b, tau }
    }

    pub fn b(&self) -> &Vec3 {
        &self.b
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn norm(&self) -> f64 {
        self.b.norm()
    }

    /// Bloch vector scaled back onto the unit ball if integration pushed it
    /// marginally outside. Meant for output only.
    pub fn clamped(&self) -> Vec3 {
        let n = self.b.norm();
        if n > 1.0 {
            self.b / n
        } else {
            self.b
        }
    }
}

/// Decomposition of the effective Hamiltonian
/// `E = E⁰ 1 - |E| e·σ`, `Γ = Γ⁰ 1 - |Γ| γ·σ` with `|Γ| = 2 r |E|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitModel {
    e: Vec3,
    gamma: Vec3,
    r: f64,
    e_mag: f64,
    e0: Option<f64>,
    gamma0: Option<f64>,
}

impl QubitModel {
    /// Builds a model from (not necessarily normalised) directions.
    pub fn new(e: Vec3, gamma: Vec3, r: f64, e_mag: f64) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::param("r", r, "must be positive and finite"));
        }
        if !(e_mag > 0.0) || !e_mag.is_finite() {
            return Err(Error::param("E_mag", e_mag, "must be positive and finite"));
        }
        let (ne, ng) = (e.norm(), gamma.norm());
        if !(ne > 0.0) || !ne.is_finite() {
            return Err(Error::param("|e|", ne, "energy direction must be non-zero"));
        }
        if !(ng > 0.0) || !ng.is_finite() {
            return Err(Error::param(
                "|gamma|",
                ng,
                "decay direction must be non-zero",
            ));
        }
        Ok(Self {
            e: e / ne,
            gamma: gamma / ng,
            r,
            e_mag,
            e0: None,
            gamma0: None,
        })
    }

    /// Model with `e = x̂` and `γ = cos θ x̂ + sin θ ŷ`, so that
    /// `e × γ = sin θ ẑ`. For `θ = 90°` this is the CPT basis used for
    /// flavour asymmetries.
    pub fn from_angle(r: f64, theta_eg: f64, e_mag: f64) -> Result<Self> {
        let e = Vec3::x();
        let gamma = Vec3::new(theta_eg.cos(), theta_eg.sin(), 0.0);
        Self::new(e, gamma, r, e_mag)
    }

    /// Critical geometry `e ⊥ γ` with `e × γ = ẑ`.
    pub fn perpendicular(r: f64, e_mag: f64) -> Result<Self> {
        Self::new(Vec3::x(), Vec3::y(), r, e_mag)
    }

    pub fn with_trace_parts(mut self, e0: f64, gamma0: f64) -> Self {
        self.e0 = Some(e0);
        self.gamma0 = Some(gamma0);
        self
    }

    pub fn e(&self) -> &Vec3 {
        &self.e
    }

    pub fn gamma(&self) -> &Vec3 {
        &self.gamma
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// `|E|` in ps⁻¹.
    pub fn e_mag(&self) -> f64 {
        self.e_mag
    }

    /// `|Γ| = 2 r |E|` in ps⁻¹.
    pub fn gamma_mag(&self) -> f64 {
        2.0 * self.r * self.e_mag
    }

    pub fn e0(&self) -> Option<f64> {
        self.e0
    }

    pub fn gamma0(&self) -> Option<f64> {
        self.gamma0
    }

    pub fn cos_eg(&self) -> f64 {
        self.e.dot(&self.gamma).clamp(-1.0, 1.0)
    }

    pub fn sin_eg(&self) -> f64 {
        self.e.cross(&self.gamma).norm()
    }

    /// Angle between `e` and `γ` in `[0, π]`.
    pub fn theta_eg(&self) -> f64 {
        self.sin_eg().atan2(self.cos_eg())
    }

    pub fn e_cross_gamma(&self) -> Vec3 {
        self.e.cross(&self.gamma)
    }

    /// True for the critical geometry `e ⊥ γ` with `r < 1`.
    pub fn is_critical(&self) -> bool {
        self.cos_eg().abs() < 1e-10 && self.r < 1.0
    }

    /// Hermitian energy matrix `E⁰ 1 - |E| e·σ` (ps⁻¹).
    pub fn energy_matrix(&self) -> Matrix2<Complex64> {
        let id = Matrix2::<Complex64>::identity();
        id * Complex64::from(self.e0.unwrap_or(0.0)) - sigma_dot(&(self.e * self.e_mag))
    }

    /// Hermitian decay matrix `Γ⁰ 1 - |Γ| γ·σ` (ps⁻¹).
    pub fn decay_matrix(&self) -> Matrix2<Complex64> {
        let id = Matrix2::<Complex64>::identity();
        id * Complex64::from(self.gamma0.unwrap_or(0.0))
            - sigma_dot(&(self.gamma * self.gamma_mag()))
    }
}

/// The three Pauli matrices.
pub fn pauli() -> [Matrix2<Complex64>; 3] {
    let o = Complex64::new(0.0, 0.0);
    let l = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    [
        Matrix2::new(o, l, l, o),
        Matrix2::new(o, -i, i, o),
        Matrix2::new(l, o, o, -l),
    ]
}

/// `v·σ`.
pub fn sigma_dot(v: &Vec3) -> Matrix2<Complex64> {
    let [sx, sy, sz] = pauli();
    sx * Complex64::from(v[0]) + sy * Complex64::from(v[1]) + sz * Complex64::from(v[2])
}

/// Returns `(Tr M, [Tr σ₁M, Tr σ₂M, Tr σ₃M])`, so that
/// `M = ½ (Tr M · 1 + Σ_k Tr(σ_k M) σ_k)`.
pub fn pauli_components(m: &Matrix2<Complex64>) -> (Complex64, [Complex64; 3]) {
    let s = pauli();
    (
        m.trace(),
        [(s[0] * m).trace(), (s[1] * m).trace(), (s[2] * m).trace()],
    )
}

/// Right-hand side of the master evolution equation,
/// `-(1/r) e × b + γ - (b·γ) b`.
pub fn bloch_rhs(b: &Vec3, model: &QubitModel) -> Vec3 {
    -model.e.cross(b) / model.r + model.gamma - b * b.dot(&model.gamma)
}

/// `db/dτ` at the given state.
pub fn bloch_derivative(state: &BlochState, model: &QubitModel) -> Vec3 {
    bloch_rhs(&state.b, model)
}

/// `d|b|²/dτ = 2 (γ·b)(1 - |b|²)`.
pub fn purity_rate(state: &BlochState, model: &QubitModel) -> f64 {
    let b = &state.b;
    2.0 * model.gamma.dot(b) * (1.0 - b.norm_squared())
}

/// A trace-normalised 2×2 density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(Matrix2<Complex64>);

impl DensityMatrix {
    /// Validates hermiticity, unit trace and the eigenvalue range.
    pub fn new(m: Matrix2<Complex64>) -> Result<Self> {
        let herm = (m - m.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if herm > IDENTITY_TOLERANCE {
            return Err(Error::param(
                "hermiticity defect",
                herm,
                "matrix is not Hermitian",
            ));
        }
        let tr = m.trace();
        if (tr - Complex64::from(1.0)).norm() > IDENTITY_TOLERANCE {
            return Err(Error::param(
                "trace",
                tr.re,
                "density matrix must have unit trace",
            ));
        }
        let rho = Self(m);
        let (lo, hi) = rho.eigenvalues();
        if lo < -STATE_TOLERANCE || hi > 1.0 + STATE_TOLERANCE {
            return Err(Error::param(
                "eigenvalue",
                lo,
                "eigenvalues must lie in [0, 1]",
            ));
        }
        Ok(rho)
    }

    pub fn entries(&self) -> &Matrix2<Complex64> {
        &self.0
    }

    /// Eigenvalues `(λ₋, λ₊)` of the Hermitian matrix.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let a = self.0[(0, 0)].re;
        let d = self.0[(1, 1)].re;
        let off = self.0[(0, 1)].norm();
        let mean = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + off * off).sqrt();
        (mean - rad, mean + rad)
    }

    /// `Tr ρ²`, equal to `(1 + |b|²)/2`.
    pub fn purity(&self) -> f64 {
        (self.0 * self.0).trace().re
    }

    pub fn is_pure(&self, tol: f64) -> bool {
        (self.0 * self.0 - self.0).iter().all(|z| z.norm() <= tol)
    }

    /// Bloch vector `b_k = Tr(σ_k ρ)`.
    pub fn bloch_vector(&self) -> Vec3 {
        let (_, c) = pauli_components(&self.0);
        Vec3::new(c[0].re, c[1].re, c[2].re)
    }
}

/// `ρ̂ = ½ (1 + b·σ)`.
pub fn density_from_bloch(state: &BlochState) -> Result<DensityMatrix> {
    let norm = state.b.norm();
    if norm > 1.0 + STATE_TOLERANCE {
        return Err(Error::BlochNorm {
            norm,
            tolerance: STATE_TOLERANCE,
        });
    }
    let half = Complex64::from(0.5);
    let m = (Matrix2::<Complex64>::identity() + sigma_dot(&state.b)) * half;
    Ok(DensityMatrix(m))
}

/// Physical-time evolution of the normalised density matrix,
/// `dρ̂/dt = -i[E, ρ̂] - ½{Γ, ρ̂} + ρ̂ Tr(ρ̂ Γ)`, in ps⁻¹.
///
/// Dividing the Pauli components by `|Γ|` gives `db/dτ`.
pub fn density_evolution_rhs(rho: &DensityMatrix, model: &QubitModel) -> Matrix2<Complex64> {
    normalised_evolution(&rho.0, &model.energy_matrix(), &model.decay_matrix())
}

/// Same right-hand side for arbitrary Hermitian `energy` and `decay` matrices.
pub fn normalised_evolution(
    rho: &Matrix2<Complex64>,
    energy: &Matrix2<Complex64>,
    decay: &Matrix2<Complex64>,
) -> Matrix2<Complex64> {
    let i = Complex64::new(0.0, 1.0);
    let commutator = energy * rho - rho * energy;
    let anticommutator = decay * rho + rho * decay;
    let loss = (rho * decay).trace();
    -commutator * i - anticommutator * Complex64::from(0.5) + rho * loss
}
