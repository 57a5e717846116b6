//! Meson–antimeson mixing observables in Bloch-sphere language.
//!
//! With `z = √(1 - r² - 2i r cos θ_eγ)` on the principal branch,
//!
//! ```text
//! ΔE = 2|E| Re z,   ΔΓ = -4|E| Im z,
//! |q/p|⁴ = (1 + r² - 2r sin θ_eγ) / (1 + r² + 2r sin θ_eγ).
//! ```
//!
//! Angles are in degrees throughout this module.

use std::fmt;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bloch::BlochState;
use crate::{Error, Result};

/// `|r - 1|` below which the damping is called critical.
pub const CRITICAL_TOLERANCE: f64 = 1e-12;

/// Largest `r` accepted from an inversion.
pub const MAX_R: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MesonObservables {
    /// `ΔE = Δm`, ps⁻¹.
    pub delta_e: f64,
    /// Signed `ΔΓ`, ps⁻¹.
    pub delta_gamma: f64,
    pub q_over_p: f64,
}

impl MesonObservables {
    pub fn new(delta_e: f64, delta_gamma: f64, q_over_p: f64) -> Result<Self> {
        if !(delta_e >= 0.0) || !delta_e.is_finite() {
            return Err(Error::param(
                "delta_E",
                delta_e,
                "must be finite and non-negative",
            ));
        }
        if !delta_gamma.is_finite() {
            return Err(Error::param("delta_Gamma", delta_gamma, "must be finite"));
        }
        if !(q_over_p > 0.0) || !q_over_p.is_finite() {
            return Err(Error::param(
                "|q/p|",
                q_over_p,
                "must be positive and finite",
            ));
        }
        Ok(Self {
            delta_e,
            delta_gamma,
            q_over_p,
        })
    }

    fn as_array(&self) -> [f64; 3] {
        [self.delta_e, self.delta_gamma, self.q_over_p - 1.0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochParameters {
    pub r: f64,
    /// Degrees, reported in `(-180, 180]`.
    pub theta_eg: f64,
    /// `|E|`, ps⁻¹.
    pub e_mag: f64,
}

impl BlochParameters {
    pub fn new(r: f64, theta_eg: f64, e_mag: f64) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::param("r", r, "must be positive and finite"));
        }
        if !theta_eg.is_finite() {
            return Err(Error::param("theta_eg", theta_eg, "must be finite"));
        }
        if !(e_mag > 0.0) || !e_mag.is_finite() {
            return Err(Error::param("E_mag", e_mag, "must be positive and finite"));
        }
        Ok(Self { r, theta_eg, e_mag })
    }

    fn as_array(&self) -> [f64; 3] {
        [self.r, self.theta_eg, self.e_mag]
    }
}

/// Wraps an angle in degrees onto `(-180, 180]`.
pub fn wrap_degrees(theta: f64) -> f64 {
    let w = theta - 360.0 * (theta / 360.0).round();
    if w <= -180.0 {
        w + 360.0
    } else {
        w
    }
}

pub fn observables_from_bloch(p: &BlochParameters) -> MesonObservables {
    let (r, e) = (p.r, p.e_mag);
    let (s, c) = p.theta_eg.to_radians().sin_cos();
    let z = Complex64::new(1.0 - r * r, -2.0 * r * c).sqrt();
    let num = 1.0 + r * r - 2.0 * r * s;
    let den = 1.0 + r * r + 2.0 * r * s;
    assert!(den > 0.0 && num > 0.0, "|q/p| is finite for every r > 0");
    MesonObservables {
        delta_e: 2.0 * e * z.re,
        delta_gamma: -4.0 * e * z.im,
        q_over_p: (num / den).powf(0.25),
    }
}

/// Result of inverting observables. `mirror` is the solution for the
/// opposite sign of `ΔΓ`, at `θ → 180° - θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inversion {
    pub primary: BlochParameters,
    pub mirror: BlochParameters,
    /// True when `ΔΓ = 0` forces `θ_eγ = ±90°`.
    pub cuq_branch: bool,
}

/// Closed-form inversion of [`observables_from_bloch`].
///
/// With `a = ΔE/2`, `g = ΔΓ/4`, `u = |E|²`, `v = r²|E|²` and
/// `t = (1-|q/p|⁴)/(2(1+|q/p|⁴))`:
///
/// ```text
/// u - v = a² - g²,   r|E|² cos θ = a g,   r|E|² sin θ = t (u + v)
/// ```
///
/// which gives `(u + v)² = ((a²-g²)² + 4a²g²)/(1 - 4t²)`.
pub fn bloch_from_observables(o: &MesonObservables) -> Result<Inversion> {
    let o = MesonObservables::new(o.delta_e, o.delta_gamma, o.q_over_p)?;
    let primary = solve(o.delta_e, o.delta_gamma, o.q_over_p)?;
    let mirror = solve(o.delta_e, -o.delta_gamma, o.q_over_p)?;
    Ok(Inversion {
        primary,
        mirror,
        cuq_branch: o.delta_gamma == 0.0,
    })
}

fn solve(delta_e: f64, delta_gamma: f64, q_over_p: f64) -> Result<BlochParameters> {
    let a = 0.5 * delta_e;
    let g = 0.25 * delta_gamma;
    let d = a * a - g * g;
    let p = a * g;
    let q4 = q_over_p.powi(4);
    let t = (1.0 - q4) / (2.0 * (1.0 + q4));
    let sum = ((d * d + 4.0 * p * p) / (1.0 - 4.0 * t * t)).sqrt();
    let u = 0.5 * (sum + d);
    let v = 0.5 * (sum - d).max(0.0);
    if !(u > 0.0) {
        return Err(Error::Unphysical(
            "no positive |E| solves the mixing relations".into(),
        ));
    }
    if !(v > 0.0) {
        return Err(Error::Unphysical(
            "ΔΓ = 0 and |q/p| = 1 imply r = 0 with undefined θ_eγ".into(),
        ));
    }
    let e_mag = u.sqrt();
    let r = (v / u).sqrt();
    if r > MAX_R {
        return Err(Error::Unphysical(format!(
            "r = {r} lies outside (0, {MAX_R}]"
        )));
    }
    let theta = wrap_degrees((t * sum).atan2(p).to_degrees());
    BlochParameters::new(r, theta, e_mag)
}

/// Flavour asymmetry `δ = b₃`, valid in the basis where `e × γ = ẑ`.
pub fn flavour_asymmetry(state: &BlochState) -> f64 {
    state.b()[2]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Damping {
    Oscillatory,
    Critical,
    Overdamped,
}

impl fmt::Display for Damping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Damping::Oscillatory => "oscillatory",
            Damping::Critical => "critical",
            Damping::Overdamped => "overdamped",
        })
    }
}

pub fn classify_damping(r: f64) -> Result<Damping> {
    if !(r > 0.0) {
        return Err(Error::param("r", r, "must be positive"));
    }
    Ok(if (r - 1.0).abs() < CRITICAL_TOLERANCE {
        Damping::Critical
    } else if r < 1.0 {
        Damping::Oscillatory
    } else {
        Damping::Overdamped
    })
}

/// A central value with a symmetric 1σ error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub error: f64,
}

const fn m(value: f64, error: f64) -> Measured {
    Measured { value, error }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MesonSystem {
    K0,
    D0,
    Bd0,
    Bs0,
}

impl MesonSystem {
    pub fn name(&self) -> &'static str {
        match self {
            MesonSystem::K0 => "K0",
            MesonSystem::D0 => "D0",
            MesonSystem::Bd0 => "Bd0",
            MesonSystem::Bs0 => "Bs0",
        }
    }
}

impl fmt::Display for MesonSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Measured mixing data and Bloch parameters for one system.
///
/// `delta_gamma` carries the sign implied by the principal branch for the
/// listed `θ_eγ`; the source tables give magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MesonCatalogueEntry {
    pub system: MesonSystem,
    pub delta_e: Measured,
    pub delta_gamma: Measured,
    pub q_over_p_minus_1: Measured,
    pub r: Measured,
    /// Degrees as listed; may lie outside `(-180, 180]`.
    pub theta_eg: Measured,
    pub e_mag: Measured,
}

impl MesonCatalogueEntry {
    pub fn observables(&self) -> MesonObservables {
        MesonObservables {
            delta_e: self.delta_e.value,
            delta_gamma: self.delta_gamma.value,
            q_over_p: 1.0 + self.q_over_p_minus_1.value,
        }
    }

    pub fn observable_errors(&self) -> [f64; 3] {
        [
            self.delta_e.error,
            self.delta_gamma.error,
            self.q_over_p_minus_1.error,
        ]
    }

    pub fn bloch(&self) -> BlochParameters {
        BlochParameters {
            r: self.r.value,
            theta_eg: self.theta_eg.value,
            e_mag: self.e_mag.value,
        }
    }

    pub fn bloch_errors(&self) -> [f64; 3] {
        [self.r.error, self.theta_eg.error, self.e_mag.error]
    }

    pub fn damping(&self) -> Damping {
        classify_damping(self.r.value).expect("catalogue r is positive")
    }
}

const CATALOGUE: [MesonCatalogueEntry; 4] = [
    MesonCatalogueEntry {
        system: MesonSystem::K0,
        delta_e: m(0.005293, 9e-6),
        delta_gamma: m(-0.01, 5e-6),
        q_over_p_minus_1: m(-0.003239, 1e-6),
        r: m(0.945, 2e-3),
        theta_eg: m(179.6322, 1e-4),
        e_mag: m(2.64652e-3, 7e-8),
    },
    MesonCatalogueEntry {
        system: MesonSystem::D0,
        delta_e: m(0.01, 0.001),
        delta_gamma: m(-0.03, 0.003),
        q_over_p_minus_1: m(-5.00e-3, 0.04e-3),
        r: m(1.5, 0.2),
        theta_eg: m(179.0, 2.0),
        e_mag: m(5.00e-3, 0.04e-3),
    },
    MesonCatalogueEntry {
        system: MesonSystem::Bd0,
        delta_e: m(0.5069, 0.0019),
        delta_gamma: m(0.7e-3, 7e-3),
        q_over_p_minus_1: m(1.0e-3, 0.8e-3),
        r: m(1e-3, 4e-3),
        theta_eg: m(-90.0, 90.0),
        e_mag: m(0.253, 0.001),
    },
    MesonCatalogueEntry {
        system: MesonSystem::Bs0,
        delta_e: m(17.765, 0.006),
        delta_gamma: m(-0.084, 0.005),
        q_over_p_minus_1: m(0.1e-3, 1.4e-3),
        r: m(2.4e-3, 0.2e-3),
        theta_eg: m(182.7, 33.8),
        e_mag: m(8.9, 0.1),
    },
];

/// The four neutral meson systems.
pub fn catalogue() -> Vec<MesonCatalogueEntry> {
    CATALOGUE.to_vec()
}

pub fn catalogue_entry(system: MesonSystem) -> MesonCatalogueEntry {
    CATALOGUE
        .iter()
        .find(|e| e.system == system)
        .copied()
        .expect("every system is catalogued")
}

/// B⁰_d world-average mixing data with the derived Bloch parameters.
pub const BD_EXPERIMENT: MesonCatalogueEntry = CATALOGUE[2];

/// Standard Model expectation for B⁰_d.
pub const BD_THEORY: MesonCatalogueEntry = MesonCatalogueEntry {
    system: MesonSystem::Bd0,
    delta_e: m(0.535, 0.021),
    delta_gamma: m(2.7e-3, 0.4e-3),
    q_over_p_minus_1: m(2.6e-4, 0.3e-4),
    r: m(2.5e-3, 0.4e-3),
    theta_eg: m(-5.0, 3.0),
    e_mag: m(0.28, 0.01),
};

/// Observables `[ΔE, ΔΓ, |q/p| - 1]` and their first-order errors
/// propagated from independent errors on `(r, θ_eγ, |E|)`.
pub fn forward_with_errors(p: &BlochParameters, sigma: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let centre = observables_from_bloch(p).as_array();
    let x = p.as_array();
    let mut var = [0.0; 3];
    for k in 0..3 {
        if sigma[k] == 0.0 {
            continue;
        }
        let h = step(x[k], sigma[k]);
        let eval = |dx: f64| {
            let mut y = x;
            y[k] += dx;
            observables_from_bloch(&BlochParameters {
                r: y[0].abs(),
                theta_eg: y[1],
                e_mag: y[2],
            })
            .as_array()
        };
        let (hi, lo) = (eval(h), eval(-h));
        for i in 0..3 {
            let d = (hi[i] - lo[i]) / (2.0 * h);
            var[i] += (d * sigma[k]).powi(2);
        }
    }
    (centre, var.map(f64::sqrt))
}

/// Primary-branch parameters `[r, θ_eγ, |E|]` and their first-order errors
/// propagated from independent errors on `[ΔE, ΔΓ, |q/p| - 1]`.
pub fn inverse_with_errors(o: &MesonObservables, sigma: [f64; 3]) -> Result<([f64; 3], [f64; 3])> {
    let centre = bloch_from_observables(o)?.primary;
    let x = o.as_array();
    let mut var = [0.0; 3];
    for k in 0..3 {
        if sigma[k] == 0.0 {
            continue;
        }
        let h = step(x[k], sigma[k]);
        let eval = |dx: f64| -> Result<[f64; 3]> {
            let mut y = x;
            y[k] += dx;
            let p = solve(y[0], y[1], 1.0 + y[2])?;
            Ok([
                p.r,
                centre.theta_eg + wrap_degrees(p.theta_eg - centre.theta_eg),
                p.e_mag,
            ])
        };
        let (hi, lo) = (eval(h)?, eval(-h)?);
        for i in 0..3 {
            let d = (hi[i] - lo[i]) / (2.0 * h);
            var[i] += (d * sigma[k]).powi(2);
        }
    }
    Ok((centre.as_array(), var.map(f64::sqrt)))
}

fn step(x: f64, sigma: f64) -> f64 {
    (1e-3 * sigma).min(1e-6 * x.abs().max(sigma)).max(1e-12)
}

/// One exported catalogue row.
#[derive(Debug, Clone, Serialize)]
pub struct CatalogueRow {
    pub system: &'static str,
    #[serde(rename = "delta_E")]
    pub delta_e: f64,
    #[serde(rename = "delta_E_err")]
    pub delta_e_err: f64,
    #[serde(rename = "delta_Gamma")]
    pub delta_gamma: f64,
    #[serde(rename = "delta_Gamma_err")]
    pub delta_gamma_err: f64,
    pub q_over_p_minus_1: f64,
    pub err: f64,
    pub r: f64,
    pub r_err: f64,
    pub theta_eg_deg: f64,
    pub theta_err: f64,
    #[serde(rename = "E_mag")]
    pub e_mag: f64,
    #[serde(rename = "E_mag_err")]
    pub e_mag_err: f64,
}

impl From<&MesonCatalogueEntry> for CatalogueRow {
    fn from(e: &MesonCatalogueEntry) -> Self {
        Self {
            system: e.system.name(),
            delta_e: e.delta_e.value,
            delta_e_err: e.delta_e.error,
            delta_gamma: e.delta_gamma.value,
            delta_gamma_err: e.delta_gamma.error,
            q_over_p_minus_1: e.q_over_p_minus_1.value,
            err: e.q_over_p_minus_1.error,
            r: e.r.value,
            r_err: e.r.error,
            theta_eg_deg: e.theta_eg.value,
            theta_err: e.theta_eg.error,
            e_mag: e.e_mag.value,
            e_mag_err: e.e_mag.error,
        }
    }
}

pub fn catalogue_rows() -> Vec<CatalogueRow> {
    CATALOGUE.iter().map(CatalogueRow::from).collect()
}

pub fn write_catalogue_csv<W: Write>(writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in catalogue_rows() {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn catalogue_json() -> Result<String> {
    Ok(serde_json::to_string_pretty(&catalogue_rows())?)
}
