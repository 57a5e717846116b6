//! Closed-form results for unstable qubits.
//!
//! Pure critical orbits (period, phase, projections), the stationary state
//! for every geometry, the coherence–decoherence oscillation of an initially
//! mixed critical qubit, and its elliptical path in the `{γ, e×γ}` plane.

use std::f64::consts::{PI, TAU};

use serde::Serialize;

use crate::bloch::QubitModel;
use crate::{Error, Result, Vec3};

/// Below this `|sin θ_eγ|` the model is treated as aligned.
pub const ALIGNED_THRESHOLD: f64 = 1e-10;
/// Below this `|cos θ_eγ|` the model is treated as perpendicular.
pub const PERPENDICULAR_THRESHOLD: f64 = 1e-10;

fn check_open_unit(name: &'static str, r: f64) -> Result<()> {
    if r > 0.0 && r < 1.0 {
        Ok(())
    } else {
        Err(Error::param(name, r, "must lie in (0, 1)"))
    }
}

/// Period and angular frequency of a critical qubit in units of `τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CuqClock {
    pub r: f64,
    pub p_hat: f64,
    pub omega_hat: f64,
}

pub fn cuq_clock(r: f64) -> Result<CuqClock> {
    check_open_unit("r", r)?;
    let root = (1.0 - r * r).sqrt();
    Ok(CuqClock {
        r,
        p_hat: TAU * r / root,
        omega_hat: root / r,
    })
}

/// Period (ps) and angular frequency (ps⁻¹) in physical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhysicalClock {
    pub period: f64,
    pub omega: f64,
}

/// `P = π / (|E| √(1-r²))`, `ω = 2|E| √(1-r²)`. `r = 0` is the Rabi limit.
pub fn restore_units(r: f64, e_mag: f64) -> Result<PhysicalClock> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::param("r", r, "oscillation requires 0 <= r < 1"));
    }
    if !(e_mag > 0.0) {
        return Err(Error::param("E_mag", e_mag, "must be positive"));
    }
    let root = (1.0 - r * r).sqrt();
    Ok(PhysicalClock {
        period: PI / (e_mag * root),
        omega: 2.0 * e_mag * root,
    })
}

/// Continuous, monotonically decreasing phase `θ(τ)` of the pure critical
/// orbit started at `b(0) = e×γ`, where `b·γ = -sin θ`, `b·(e×γ) = cos θ`.
pub fn cuq_theta(tau: f64, r: f64) -> Result<f64> {
    let clock = cuq_clock(r)?;
    let k = ((1.0 + r) / (1.0 - r)).sqrt();
    let x = clock.omega_hat * tau;
    let turns = (x / TAU + 0.5).floor();
    let reduced = x - TAU * turns;
    let half = 0.5 * reduced;
    Ok(-2.0 * (k * half.sin()).atan2(half.cos()) - TAU * turns)
}

/// Projections of the pure critical orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Projections {
    /// `b·γ`
    pub b_gamma: f64,
    /// `b·(e×γ)`
    pub b_exg: f64,
}

pub fn cuq_projections(tau: f64, r: f64) -> Result<Projections> {
    let clock = cuq_clock(r)?;
    let (s, c) = (clock.omega_hat * tau).sin_cos();
    let denom = 1.0 - r * c;
    Ok(Projections {
        b_gamma: (1.0 - r * r).sqrt() * s / denom,
        b_exg: (c - r) / denom,
    })
}

/// Effective parameter seen by a pure critical orbit of radius `amplitude`:
/// `r̃ = r R / √(1 - r²(1 - R²))`.
pub fn effective_r(r: f64, amplitude: f64) -> Result<f64> {
    check_open_unit("r", r)?;
    if !(amplitude > 0.0 && amplitude <= 1.0) {
        return Err(Error::param("amplitude", amplitude, "must lie in (0, 1]"));
    }
    Ok(r * amplitude / (1.0 - r * r * (1.0 - amplitude * amplitude)).sqrt())
}

/// A point of a pure critical orbit, in the `(γ, e×γ, e)` frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrbitPoint {
    pub b_gamma: f64,
    pub b_exg: f64,
    pub b_e: f64,
}

impl OrbitPoint {
    /// Cartesian vector for a perpendicular model.
    pub fn to_vector(&self, model: &QubitModel) -> Vec3 {
        model.gamma() * self.b_gamma + model.e_cross_gamma() * self.b_exg + model.e() * self.b_e
    }
}

/// Pure critical orbit of radius `amplitude` on the Bloch sphere.
///
/// Pure critical orbits are the circles cut from the sphere by planes
/// through the line `b·(e×γ) = -1/r, b·e = 0`. The circle of radius `R`
/// has centre `(0, -r d², κ d)` with `d = √(1-R²)`, `κ = √(1-r²d²)`, and
/// its in-plane motion is the unit orbit of [`effective_r`] run at the rate
/// `R`. The point at `τ = 0` has `b·γ = 0` and maximal `b·(e×γ)`. With
/// `amplitude = 1` this is [`cuq_projections`].
pub fn tilted_orbit(tau: f64, r: f64, amplitude: f64) -> Result<OrbitPoint> {
    let r_eff = effective_r(r, amplitude)?;
    let unit = cuq_projections(amplitude * tau, r_eff)?;
    let d2 = 1.0 - amplitude * amplitude;
    let d = d2.sqrt();
    let kappa = (1.0 - r * r * d2).sqrt();
    Ok(OrbitPoint {
        b_gamma: amplitude * unit.b_gamma,
        b_exg: -r * d2 + kappa * amplitude * unit.b_exg,
        b_e: kappa * d + r * d * amplitude * unit.b_exg,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AsymptoticBranch {
    General,
    Aligned,
    PerpendicularOverdamped,
    CriticalNoStationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticState {
    /// Stationary Bloch vector; `None` for critical qubits.
    pub b_star: Option<Vec3>,
    /// Coefficient of `b_star` along `e`.
    pub alpha: f64,
    pub branch: AsymptoticBranch,
}

/// Stationary state of the master evolution equation, classified by
/// geometry.
pub fn asymptotic_state(model: &QubitModel) -> AsymptoticState {
    let r = model.r();
    let e = *model.e();
    let c = model.e().dot(model.gamma());
    let exg = model.e_cross_gamma();
    let s2 = exg.norm_squared();

    if s2.sqrt() < ALIGNED_THRESHOLD {
        let sign = c.signum();
        return AsymptoticState {
            b_star: Some(e * sign),
            alpha: sign,
            branch: AsymptoticBranch::Aligned,
        };
    }
    if c.abs() < PERPENDICULAR_THRESHOLD {
        if r >= 1.0 {
            let b = model.gamma() * ((r * r - 1.0).sqrt() / r) - exg / r;
            return AsymptoticState {
                b_star: Some(b),
                alpha: 0.0,
                branch: AsymptoticBranch::PerpendicularOverdamped,
            };
        }
        return AsymptoticState {
            b_star: None,
            alpha: 0.0,
            branch: AsymptoticBranch::CriticalNoStationary,
        };
    }

    let one_minus = 1.0 - r * r;
    let alpha = c.signum() / 2f64.sqrt()
        * (one_minus + (one_minus * one_minus + 4.0 * c * c * r * r).sqrt()).sqrt();
    let w = 1.0 - alpha * alpha;
    let b = e * alpha - exg * (w / (s2 * r)) - e.cross(&exg) * (c * w / (s2 * alpha));
    AsymptoticState {
        b_star: Some(b),
        alpha,
        branch: AsymptoticBranch::General,
    }
}

/// `|b(τ)|` for a critical qubit started fully mixed, `0 < r ≤ 1`.
pub fn mixed_magnitude(tau: f64, r: f64) -> Result<f64> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::param("r", r, "must lie in (0, 1]"));
    }
    let sq = if r == 1.0 {
        let d = 2.0 + tau * tau;
        1.0 - 4.0 / (d * d)
    } else {
        let one_minus = 1.0 - r * r;
        let omega = one_minus.sqrt() / r;
        let denom = 1.0 - r * r * (omega * tau).cos();
        1.0 - one_minus * one_minus / (denom * denom)
    };
    Ok(sq.max(0.0).sqrt())
}

/// Largest `|b|` reached from a fully mixed start, `2r/(1+r²)`.
///
/// `1 - (1-r²)²/(1+r²)²` is the square of this, not `max|b|` itself.
pub fn mixed_max_magnitude(r: f64) -> f64 {
    2.0 * r / (1.0 + r * r)
}

/// `|b|` as a function of the polar angle `φ` (with `b·γ = |b| cos φ`) for a
/// fully mixed start: `-2r sin φ / (1 + r² sin² φ)`, valid on `[-π, 0]`.
pub fn mixed_magnitude_vs_angle(phi: f64, r: f64) -> Result<f64> {
    check_open_unit("r", r)?;
    let wrapped = phi - TAU * (phi / TAU).round();
    let s = wrapped.sin();
    if s > 1e-12 {
        return Err(Error::OutOfBranch { phi });
    }
    Ok((-2.0 * r * s / (1.0 + r * r * s * s)).max(0.0))
}

/// Elliptical path of the mixed-start critical orbit in the `{γ, e×γ}` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixedEllipse {
    pub r: f64,
    /// Half-width along `γ`, `r/√(1+r²)`.
    pub semi_major: f64,
    /// Half-height along `e×γ`, `r/(1+r²)`.
    pub semi_minor: f64,
    /// `r/√(1+r²)`.
    pub eccentricity: f64,
}

impl MixedEllipse {
    /// `[X/X*]² + [Y/Y*]² - 1` with `X = b·γ`, `Y = b·(e×γ) + Y*`.
    pub fn residual(&self, b_gamma: f64, b_exg: f64) -> f64 {
        let x = b_gamma / self.semi_major;
        let y = (b_exg + self.semi_minor) / self.semi_minor;
        x * x + y * y - 1.0
    }
}

pub fn mixed_ellipse(r: f64) -> Result<MixedEllipse> {
    check_open_unit("r", r)?;
    let q = 1.0 + r * r;
    Ok(MixedEllipse {
        r,
        semi_major: r / q.sqrt(),
        semi_minor: r / q,
        eccentricity: r / q.sqrt(),
    })
}

/// Planar polar flow `(d|b|/dτ, dφ/dτ) = ((1-|b|²) cos φ, -1/r - sin φ/|b|)`.
pub fn polar_rates(b_mag: f64, phi: f64, r: f64) -> Result<(f64, f64)> {
    if !(r > 0.0) {
        return Err(Error::param("r", r, "must be positive"));
    }
    if b_mag == 0.0 {
        return Err(Error::SingularPolar);
    }
    if !(b_mag > 0.0 && b_mag <= 1.0) {
        return Err(Error::param("b_mag", b_mag, "must lie in (0, 1]"));
    }
    let (s, c) = phi.sin_cos();
    Ok(((1.0 - b_mag * b_mag) * c, -1.0 / r - s / b_mag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn clock_invariants_and_limits() {
        for r in [1e-6, 0.1, 0.5, 0.85, 0.99] {
            let c = cuq_clock(r).unwrap();
            assert_abs_diff_eq!(c.omega_hat * c.p_hat, TAU, epsilon = 1e-12);
            assert_abs_diff_eq!(c.p_hat, TAU * r / (1.0 - r * r).sqrt(), epsilon = 1e-12);
        }
        let tiny = cuq_clock(1e-8).unwrap();
        assert_abs_diff_eq!(tiny.p_hat / (TAU * 1e-8), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(tiny.omega_hat * 1e-8, 1.0, epsilon = 1e-12);
        assert!(cuq_clock(1.0).is_err());
        assert!(cuq_clock(0.0).is_err());
    }

    #[test]
    fn physical_units() {
        let rabi = restore_units(0.0, 0.253).unwrap();
        assert_abs_diff_eq!(rabi.omega, 0.506, epsilon = 1e-15);
        let c = restore_units(0.85, 1.0).unwrap();
        assert_abs_diff_eq!(c.period, PI / 0.2775f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(c.period, 5.96374, epsilon = 1e-5);
        assert_abs_diff_eq!(c.omega * c.period, TAU, epsilon = 1e-12);
        // τ-period divided by |Γ| = 2 r |E|.
        let p_hat = cuq_clock(0.85).unwrap().p_hat;
        assert_abs_diff_eq!(c.period, p_hat / (2.0 * 0.85), epsilon = 1e-12);
        assert!(restore_units(1.0, 1.0).is_err());
        assert!(restore_units(1.0 - 1e-9, 1.0).unwrap().period > 1e4);
    }

    #[test]
    fn theta_anchor_points() {
        for r in [0.2, 0.5, 0.85] {
            let p = cuq_clock(r).unwrap().p_hat;
            assert_eq!(cuq_theta(0.0, r).unwrap(), 0.0);
            assert_abs_diff_eq!(cuq_theta(0.5 * p, r).unwrap(), -PI, epsilon = 1e-12);
            assert_abs_diff_eq!(cuq_theta(p, r).unwrap(), -TAU, epsilon = 1e-12);
            assert_abs_diff_eq!(cuq_theta(2.5 * p, r).unwrap(), -5.0 * PI, epsilon = 1e-11);
        }
        assert!(cuq_theta(1.0, 1.2).is_err());
    }

    #[test]
    fn projections_anchor_points() {
        let r = 0.85;
        let p = cuq_clock(r).unwrap().p_hat;
        let start = cuq_projections(0.0, r).unwrap();
        assert_eq!((start.b_gamma, start.b_exg), (0.0, 1.0));
        let half = cuq_projections(0.5 * p, r).unwrap();
        assert_abs_diff_eq!(half.b_gamma, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(half.b_exg, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn tilted_orbit_reduces_to_unit_orbit() {
        for tau in [0.0, 0.7, 3.1] {
            let a = tilted_orbit(tau, 0.6, 1.0).unwrap();
            let b = cuq_projections(tau, 0.6).unwrap();
            assert_abs_diff_eq!(a.b_gamma, b.b_gamma, epsilon = 1e-15);
            assert_abs_diff_eq!(a.b_exg, b.b_exg, epsilon = 1e-15);
            assert_eq!(a.b_e, 0.0);
        }
        let p = tilted_orbit(1.3, 0.6, 0.4).unwrap();
        let norm = (p.b_gamma.powi(2) + p.b_exg.powi(2) + p.b_e.powi(2)).sqrt();
        assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn asymptotic_special_cases() {
        let up = QubitModel::new(Vec3::x(), Vec3::x(), 0.3, 1.0).unwrap();
        let s = asymptotic_state(&up);
        assert_eq!(s.branch, AsymptoticBranch::Aligned);
        assert_eq!(s.b_star.unwrap(), Vec3::x());
        let down = QubitModel::new(Vec3::x(), -Vec3::x(), 0.3, 1.0).unwrap();
        assert_eq!(asymptotic_state(&down).b_star.unwrap(), -Vec3::x());

        let crit = QubitModel::perpendicular(1.0, 1.0).unwrap();
        let s = asymptotic_state(&crit);
        assert_eq!(s.branch, AsymptoticBranch::PerpendicularOverdamped);
        let b = s.b_star.unwrap();
        assert!((b + crit.e_cross_gamma()).norm() < 1e-15);

        let cuq = QubitModel::perpendicular(0.5, 1.0).unwrap();
        let s = asymptotic_state(&cuq);
        assert_eq!(s.branch, AsymptoticBranch::CriticalNoStationary);
        assert!(s.b_star.is_none());
    }

    #[test]
    fn general_alpha_tends_to_aligned_limit() {
        // c_γ → ±1 gives α → ±1 for any r.
        for r in [0.3, 1.0, 2.5] {
            for sign in [1.0, -1.0] {
                let theta: f64 = if sign > 0.0 { 1e-7 } else { PI - 1e-7 };
                let m = QubitModel::from_angle(r, theta, 1.0).unwrap();
                let s = asymptotic_state(&m);
                assert_eq!(s.branch, AsymptoticBranch::General);
                assert_abs_diff_eq!(s.alpha, sign, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn general_state_is_pure() {
        for r in [0.2, 0.9, 1.0, 1.7] {
            for deg in [5.0f64, 30.0, 60.0, 89.0, 120.0, 170.0] {
                let m = QubitModel::from_angle(r, deg.to_radians(), 1.0).unwrap();
                let b = asymptotic_state(&m).b_star.unwrap();
                assert_abs_diff_eq!(b.norm(), 1.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn mixed_magnitude_values() {
        assert_eq!(mixed_magnitude(0.0, 0.85).unwrap(), 0.0);
        let r: f64 = 0.85;
        let p = cuq_clock(r).unwrap().p_hat;
        assert_abs_diff_eq!(
            mixed_magnitude(0.5 * p, r).unwrap(),
            mixed_max_magnitude(r),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(mixed_max_magnitude(r), 0.98694, epsilon = 1e-5);
        let d: f64 = 2.0 + 3600.0;
        assert_abs_diff_eq!(
            mixed_magnitude(60.0, 1.0).unwrap(),
            (1.0 - 4.0 / (d * d)).sqrt(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(mixed_magnitude(1e6, 1.0).unwrap(), 1.0, epsilon = 1e-15);
        assert!(mixed_magnitude(1.0, 1.5).is_err());
    }

    #[test]
    fn magnitude_vs_angle() {
        let r = 0.4;
        assert_abs_diff_eq!(
            mixed_magnitude_vs_angle(-PI / 2.0, r).unwrap(),
            2.0 * r / (1.0 + r * r),
            epsilon = 1e-15
        );
        assert_eq!(mixed_magnitude_vs_angle(0.0, r).unwrap(), 0.0);
        assert_abs_diff_eq!(
            mixed_magnitude_vs_angle(-PI, r).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let expect = 2.0 * r * s / (1.0 + r * r * 0.5);
        assert_abs_diff_eq!(
            mixed_magnitude_vs_angle(-PI / 4.0, r).unwrap(),
            expect,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(expect, 0.52378, epsilon = 1e-5);
        // Period π in φ on the valid half-plane, via 2π wrapping.
        assert_abs_diff_eq!(
            mixed_magnitude_vs_angle(-PI / 4.0 - TAU, r).unwrap(),
            expect,
            epsilon = 1e-14
        );
        assert!(matches!(
            mixed_magnitude_vs_angle(PI / 3.0, r),
            Err(Error::OutOfBranch { .. })
        ));
    }

    #[test]
    fn ellipse_geometry() {
        let e = mixed_ellipse(0.6).unwrap();
        assert_abs_diff_eq!(e.semi_major, 0.51450, epsilon = 1e-5);
        assert_abs_diff_eq!(e.semi_minor, 0.44118, epsilon = 1e-5);
        assert_abs_diff_eq!(e.eccentricity.powi(2), 0.36 / 1.36, epsilon = 1e-15);
        assert!(e.semi_minor <= e.semi_major);
        let ratio = e.semi_minor / e.semi_major;
        assert_abs_diff_eq!(e.eccentricity.powi(2) + ratio * ratio, 1.0, epsilon = 1e-12);
        // Origin and the apex -2Y* both lie on the ellipse.
        assert_abs_diff_eq!(e.residual(0.0, 0.0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.residual(0.0, -2.0 * e.semi_minor), 0.0, epsilon = 1e-15);

        let small = mixed_ellipse(1e-4).unwrap();
        assert_abs_diff_eq!(small.semi_major / 1e-4, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(small.semi_minor / 1e-4, 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(small.eccentricity, 1e-4, epsilon = 1e-12);
        // e = r + O(r³)
        let r = 0.01;
        let e = mixed_ellipse(r).unwrap().eccentricity;
        assert!((e - r).abs() < r.powi(3));
    }

    #[test]
    fn polar_flow() {
        let (db, _) = polar_rates(1.0, 0.3, 0.5).unwrap();
        assert_eq!(db, 0.0);
        let r: f64 = 0.6;
        let (_, dphi) = polar_rates(2.0 * r / (1.0 + r * r), -PI / 2.0, r).unwrap();
        assert_abs_diff_eq!(dphi, (r * r - 1.0) / (2.0 * r), epsilon = 1e-15);
        assert!(dphi < 0.0);
        assert!(matches!(
            polar_rates(0.0, 0.1, 0.5),
            Err(Error::SingularPolar)
        ));
        assert!(polar_rates(1.2, 0.1, 0.5).is_err());
    }
}
