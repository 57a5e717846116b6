//! Fourier spectra of critical oscillations and the anharmonicity factors
//! that map them back to `r`.
//!
//! The projections of the pure critical orbit expand as
//!
//! ```text
//! b·γ     =       Σ c_n sin(n ω̂ τ)
//! b·(e×γ) = d_0 + Σ d_n cos(n ω̂ τ)
//! ```
//!
//! with `c_n = d_n = 2√(1-r²)/(1+√(1-r²)) · q^(n-1)`, `q = r/(1+√(1-r²))`
//! and `d_0 = -q`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::analytic::cuq_clock;
use crate::quadrature;
use crate::{Error, Result};

/// Largest harmonic accepted by [`quadrature_spectrum`].
pub const MAX_HARMONIC: usize = 64;

const QUADRATURE_TOL: f64 = 1e-10;
const PERIODICITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SeriesKind {
    /// Sine series of `b·γ`; ratios `C_n = c_(n+1)/c_n`, `n ≥ 1`.
    Odd,
    /// Cosine series of `b·(e×γ)`; ratios `D_n = d_(n+1)/d_n`, `n ≥ 0`.
    Even,
}

impl SeriesKind {
    pub fn label(&self) -> &'static str {
        match self {
            SeriesKind::Odd => "C",
            SeriesKind::Even => "D",
        }
    }
}

/// Truncated Fourier series, optionally with uncertainties.
///
/// Index `0` of `errors` and of `covariance` refers to `d0`, index `n` to
/// `coeffs[n-1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierSpectrum {
    pub d0: f64,
    pub coeffs: Vec<f64>,
    pub kind: SeriesKind,
    /// Fundamental angular frequency, in the time unit of the signal.
    pub omega: f64,
    pub errors: Option<Vec<f64>>,
    pub covariance: Option<Vec<Vec<f64>>>,
}

impl FourierSpectrum {
    pub fn new(d0: f64, coeffs: Vec<f64>, kind: SeriesKind, omega: f64) -> Self {
        Self {
            d0,
            coeffs,
            kind,
            omega,
            errors: None,
            covariance: None,
        }
    }

    /// Highest harmonic present.
    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    /// `d_0` for `n = 0`, otherwise the `n`-th harmonic.
    pub fn coefficient(&self, n: usize) -> Option<f64> {
        if n == 0 {
            Some(self.d0)
        } else {
            self.coeffs.get(n - 1).copied()
        }
    }

    pub fn error(&self, n: usize) -> f64 {
        self.errors
            .as_ref()
            .and_then(|e| e.get(n).copied())
            .unwrap_or(0.0)
    }

    fn cov(&self, i: usize, j: usize) -> f64 {
        match &self.covariance {
            Some(c) => c.get(i).and_then(|row| row.get(j)).copied().unwrap_or(0.0),
            None if i == j => self.error(i).powi(2),
            None => 0.0,
        }
    }

    /// Value of the truncated series at time `t`.
    pub fn evaluate(&self, t: f64) -> f64 {
        let x = self.omega * t;
        let harmonics: f64 = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let arg = (k + 1) as f64 * x;
                match self.kind {
                    SeriesKind::Odd => c * arg.sin(),
                    SeriesKind::Even => c * arg.cos(),
                }
            })
            .sum();
        self.d0 + harmonics
    }
}

fn check_r(r: f64) -> Result<()> {
    if (0.0..1.0).contains(&r) {
        Ok(())
    } else {
        Err(Error::param("r", r, "must lie in [0, 1)"))
    }
}

/// `q = (1 - √(1-r²))/r`, evaluated without cancellation.
pub fn ratio_q(r: f64) -> f64 {
    r / (1.0 + (1.0 - r * r).sqrt())
}

/// `c_n = d_n` for `n ≥ 1`. Finite as `r → 0`, where `c_1 → 1`.
pub fn closed_form_cn(n: usize, r: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::param("n", 0.0, "harmonic order starts at 1"));
    }
    check_r(r)?;
    let root = (1.0 - r * r).sqrt();
    let lead = 2.0 * root / (1.0 + root);
    Ok(lead * ratio_q(r).powi(n as i32 - 1))
}

/// Constant term of the `b·(e×γ)` series, `d_0 = -q`.
pub fn closed_form_d0(r: f64) -> Result<f64> {
    check_r(r)?;
    Ok(-ratio_q(r))
}

/// Closed-form spectrum through harmonic `n_max`, in units of `τ`.
pub fn closed_form_spectrum(r: f64, n_max: usize, kind: SeriesKind) -> Result<FourierSpectrum> {
    let clock = cuq_clock(r)?;
    let coeffs = (1..=n_max)
        .map(|n| closed_form_cn(n, r))
        .collect::<Result<Vec<_>>>()?;
    let d0 = match kind {
        SeriesKind::Odd => 0.0,
        SeriesKind::Even => closed_form_d0(r)?,
    };
    Ok(FourierSpectrum::new(d0, coeffs, kind, clock.omega_hat))
}

/// Fourier coefficients of a `period`-periodic signal by adaptive
/// quadrature over `[-P/2, P/2]`.
pub fn quadrature_spectrum<F: Fn(f64) -> f64>(
    signal: F,
    period: f64,
    n_max: usize,
    kind: SeriesKind,
) -> Result<FourierSpectrum> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::param(
            "period",
            period,
            "must be positive and finite",
        ));
    }
    if n_max > MAX_HARMONIC {
        return Err(Error::param("N", n_max as f64, "at most 64 harmonics"));
    }
    let half = 0.5 * period;
    let mismatch = (signal(-half) - signal(half)).abs();
    if !(mismatch <= PERIODICITY_TOL) {
        return Err(Error::NonPeriodic { mismatch });
    }
    let omega = TAU / period;
    let panels = |n: usize| 8.max(2 * n);

    let mean = quadrature::integrate(&signal, -half, half, QUADRATURE_TOL, panels(0))?;
    let coeffs = (1..=n_max)
        .map(|n| {
            let k = n as f64 * omega;
            let res = match kind {
                SeriesKind::Odd => quadrature::integrate(
                    |t| signal(t) * (k * t).sin(),
                    -half,
                    half,
                    QUADRATURE_TOL,
                    panels(n),
                ),
                SeriesKind::Even => quadrature::integrate(
                    |t| signal(t) * (k * t).cos(),
                    -half,
                    half,
                    QUADRATURE_TOL,
                    panels(n),
                ),
            }?;
            Ok(2.0 * res.value / period)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FourierSpectrum::new(
        mean.value / period,
        coeffs,
        kind,
        omega,
    ))
}

/// A ratio of consecutive coefficients and the `r` it implies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnharmonicityEstimate {
    pub kind: SeriesKind,
    /// `n` in `C_n` or `D_n`.
    pub order: usize,
    /// Signed ratio.
    pub ratio: f64,
    pub ratio_err: f64,
    pub r_hat: f64,
    pub r_err: f64,
    /// False when the denominator is consistent with zero.
    pub reliable: bool,
}

/// `C_n = c_(n+1)/c_n` (`Odd`, `n ≥ 1`) or `D_n = d_(n+1)/d_n` (`Even`,
/// `n ≥ 0`) with first-order propagated error.
pub fn anharmonicity(spectrum: &FourierSpectrum, order: usize) -> Result<AnharmonicityEstimate> {
    if spectrum.kind == SeriesKind::Odd && order == 0 {
        return Err(Error::param("order", 0.0, "odd series ratios start at C_1"));
    }
    let den = spectrum
        .coefficient(order)
        .ok_or(Error::MissingCoefficient(order))?;
    let num = spectrum
        .coefficient(order + 1)
        .ok_or(Error::MissingCoefficient(order + 1))?;
    let (i, j) = (order, order + 1);
    let ratio = num / den;
    let var = (spectrum.cov(j, j) - 2.0 * ratio * spectrum.cov(i, j)
        + ratio * ratio * spectrum.cov(i, i))
        / (den * den);
    let ratio_err = if ratio.is_finite() {
        var.max(0.0).sqrt()
    } else {
        f64::INFINITY
    };
    let reliable = den != 0.0 && den.abs() >= spectrum.error(i);
    let mut est = AnharmonicityEstimate {
        kind: spectrum.kind,
        order,
        ratio,
        ratio_err,
        r_hat: f64::NAN,
        r_err: f64::NAN,
        reliable,
    };
    let (r, r_err) = r_from_anharmonicity(&est);
    est.r_hat = r;
    est.r_err = r_err;
    Ok(est)
}

/// Maps a ratio to `r`. `D_0` uses `r = 1/√(1 + D_0²/4)`; every other ratio
/// uses `r = 2ρ/(1+ρ²)`. Ratios enter through their absolute value.
pub fn r_from_anharmonicity(est: &AnharmonicityEstimate) -> (f64, f64) {
    let rho = est.ratio.abs();
    if est.kind == SeriesKind::Even && est.order == 0 {
        if rho.is_infinite() {
            return (0.0, 0.0);
        }
        let s = 1.0 + 0.25 * rho * rho;
        let deriv = 0.25 * rho * s.powf(-1.5);
        (s.sqrt().recip(), deriv * est.ratio_err)
    } else {
        if rho.is_infinite() {
            return (0.0, 0.0);
        }
        let s = 1.0 + rho * rho;
        let deriv = 2.0 * (1.0 - rho * rho) / (s * s);
        (2.0 * rho / s, deriv.abs() * est.ratio_err)
    }
}

/// Undoes the amplitude bias of a pure orbit of radius `R`:
/// `r = r̃/√(R² + r̃²(1-R²))`.
pub fn correct_effective_r(r_tilde: f64, amplitude: f64) -> Result<f64> {
    check_amplitude(amplitude)?;
    if !(0.0..=1.0).contains(&r_tilde) {
        return Err(Error::param("r_tilde", r_tilde, "must lie in [0, 1]"));
    }
    let a2 = amplitude * amplitude;
    Ok(r_tilde / (a2 + r_tilde * r_tilde * (1.0 - a2)).sqrt())
}

fn check_amplitude(amplitude: f64) -> Result<()> {
    if amplitude > 0.0 && amplitude <= 1.0 {
        Ok(())
    } else {
        Err(Error::param("amplitude", amplitude, "must lie in (0, 1]"))
    }
}

/// Applies [`correct_effective_r`] to an estimate, propagating its error.
pub fn correct_estimate(
    est: &AnharmonicityEstimate,
    amplitude: f64,
) -> Result<AnharmonicityEstimate> {
    check_amplitude(amplitude)?;
    let rt = est.r_hat;
    let a2 = amplitude * amplitude;
    let s = a2 + rt * rt * (1.0 - a2);
    Ok(AnharmonicityEstimate {
        r_hat: correct_effective_r(rt, amplitude)?,
        r_err: est.r_err * a2 * s.powf(-1.5),
        ..*est
    })
}
