//! Adaptive integration of the master evolution equation.
//!
//! Dormand–Prince 5(4) with a proportional–integral step controller and
//! cubic Hermite dense output between accepted steps. The step is capped at
//! a fraction of the oscillation period when `r < 1` so trajectories are
//! densely sampled and the fast `1/r` rotation is resolved.

use std::f64::consts::PI;

use serde::Serialize;

use crate::bloch::{bloch_rhs, BlochState, QubitModel};
use crate::{Error, Result, Vec3};

// The flow is autonomous, so the stage nodes c_i are not needed.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO: f64 = 0.2 - BETA * 0.75;
const MIN_SHRINK: f64 = 0.2;
const MAX_GROWTH: f64 = 10.0;

/// Minimum number of accepted steps per oscillation period for `r < 1`.
pub const SAMPLES_PER_PERIOD: f64 = 64.0;

/// Below this `r` the step is also capped at `2πr/32`.
pub const SMALL_R: f64 = 0.05;

#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Extra cap on the step size, on top of the period-based one.
    pub max_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            max_step: None,
            max_steps: 5_000_000,
        }
    }
}

impl EvolveOptions {
    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            rel_tol,
            abs_tol,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        for tol in [self.rel_tol, self.abs_tol] {
            if !(tol > 0.0 && tol <= 1e-2) {
                return Err(Error::InvalidTolerance(tol));
            }
        }
        Ok(())
    }

    /// Radial errors on critical orbits are amplified by up to
    /// `((1+r)/(1-r))²` over half a period, so the guard sits well above the
    /// tolerance and only catches a diverging integration.
    fn drift_bound(&self) -> f64 {
        1.0 + (1e3 * self.rel_tol.max(self.abs_tol)).min(1e-2)
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct ControllerStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evaluations: usize,
    /// Largest scaled error estimate among accepted steps (always ≤ 1).
    pub max_error_estimate: f64,
}

/// Accepted integration steps with their derivatives.
#[derive(Debug, Clone)]
pub struct Trajectory {
    samples: Vec<BlochState>,
    derivatives: Vec<Vec3>,
    model: QubitModel,
    stats: ControllerStats,
}

impl Trajectory {
    pub fn samples(&self) -> &[BlochState] {
        &self.samples
    }

    pub fn model(&self) -> &QubitModel {
        &self.model
    }

    pub fn stats(&self) -> &ControllerStats {
        &self.stats
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first(&self) -> &BlochState {
        &self.samples[0]
    }

    pub fn last(&self) -> &BlochState {
        self.samples
            .last()
            .expect("trajectory holds the initial state")
    }

    pub fn tau_end(&self) -> f64 {
        self.last().tau()
    }

    /// Cubic Hermite interpolation of `b` at `tau`; `None` outside the span.
    pub fn interpolate(&self, tau: f64) -> Option<Vec3> {
        let t0 = self.first().tau();
        let t1 = self.tau_end();
        if !(tau >= t0 && tau <= t1) {
            return None;
        }
        let k = self
            .samples
            .partition_point(|s| s.tau() <= tau)
            .clamp(1, self.samples.len().max(2) - 1);
        if self.samples.len() == 1 {
            return Some(*self.samples[0].b());
        }
        let (a, b) = (&self.samples[k - 1], &self.samples[k]);
        let h = b.tau() - a.tau();
        let s = (tau - a.tau()) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        Some(
            a.b() * h00
                + self.derivatives[k - 1] * (h10 * h)
                + b.b() * h01
                + self.derivatives[k] * (h11 * h),
        )
    }

    /// `n ≥ 2` equally spaced states spanning the trajectory.
    pub fn resample(&self, n: usize) -> Vec<BlochState> {
        let n = n.max(2);
        let t0 = self.first().tau();
        let span = self.tau_end() - t0;
        (0..n)
            .map(|i| {
                let tau = if i + 1 == n {
                    self.tau_end()
                } else {
                    t0 + span * i as f64 / (n - 1) as f64
                };
                let b = self.interpolate(tau).expect("inside span");
                BlochState::unchecked(b, tau)
            })
            .collect()
    }
}

/// Estimated oscillation period in τ, `2πr/√(1-r²)`, for `r < 1`.
fn period_estimate(r: f64) -> Option<f64> {
    (r < 1.0).then(|| 2.0 * PI * r / (1.0 - r * r).sqrt())
}

struct Stepper<'a> {
    model: &'a QubitModel,
    opts: EvolveOptions,
    y: Vec3,
    f: Vec3,
    tau: f64,
    h: f64,
    h_cap: f64,
    err_old: f64,
    stats: ControllerStats,
}

impl<'a> Stepper<'a> {
    fn new(model: &'a QubitModel, b0: Vec3, tau0: f64, opts: EvolveOptions) -> Self {
        let r = model.r();
        let mut h_cap = opts.max_step.unwrap_or(f64::INFINITY);
        if let Some(p) = period_estimate(r) {
            h_cap = h_cap.min(p / SAMPLES_PER_PERIOD);
        }
        if r < SMALL_R {
            h_cap = h_cap.min(2.0 * PI * r / 32.0);
        }
        let f = bloch_rhs(&b0, model);
        let mut stepper = Self {
            model,
            opts,
            y: b0,
            f,
            tau: tau0,
            h: 0.0,
            h_cap,
            err_old: 1e-4,
            stats: ControllerStats {
                rhs_evaluations: 1,
                ..ControllerStats::default()
            },
        };
        stepper.h = stepper.initial_step();
        stepper
    }

    fn scale(&self, a: &Vec3, b: &Vec3, i: usize) -> f64 {
        self.opts.abs_tol + self.opts.rel_tol * a[i].abs().max(b[i].abs())
    }

    fn norm(&self, v: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
        let sum: f64 = (0..3).map(|i| (v[i] / self.scale(a, b, i)).powi(2)).sum();
        (sum / 3.0).sqrt()
    }

    fn initial_step(&mut self) -> f64 {
        let d0 = self.norm(&self.y, &self.y, &self.y);
        let d1 = self.norm(&self.f, &self.y, &self.y);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        }
        .min(self.h_cap);
        let y1 = self.y + self.f * h0;
        let f1 = bloch_rhs(&y1, self.model);
        self.stats.rhs_evaluations += 1;
        let d2 = self.norm(&(f1 - self.f), &self.y, &self.y) / h0;
        let dmax = d1.max(d2);
        let h1 = if dmax <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / dmax).powf(0.2)
        };
        (100.0 * h0).min(h1).min(self.h_cap)
    }

    /// Takes one accepted step without passing `tau_limit`.
    fn step(&mut self, tau_limit: f64) -> Result<()> {
        let m = self.model;
        loop {
            if self.stats.accepted + self.stats.rejected >= self.opts.max_steps {
                return Err(Error::StepSizeUnderflow {
                    tau: self.tau,
                    step: self.h,
                });
            }
            let remaining = tau_limit - self.tau;
            let mut h = self.h.min(self.h_cap);
            let last = h >= remaining * (1.0 - 1e-12);
            if last {
                h = remaining;
            }
            if h <= 1e-14 * self.tau.abs().max(1.0) {
                return Err(Error::StepSizeUnderflow {
                    tau: self.tau,
                    step: h,
                });
            }
            let y = self.y;
            let k1 = self.f;
            let k2 = bloch_rhs(&(y + k1 * (h * A21)), m);
            let k3 = bloch_rhs(&(y + (k1 * A31 + k2 * A32) * h), m);
            let k4 = bloch_rhs(&(y + (k1 * A41 + k2 * A42 + k3 * A43) * h), m);
            let k5 = bloch_rhs(&(y + (k1 * A51 + k2 * A52 + k3 * A53 + k4 * A54) * h), m);
            let k6 = bloch_rhs(
                &(y + (k1 * A61 + k2 * A62 + k3 * A63 + k4 * A64 + k5 * A65) * h),
                m,
            );
            let y_new = y + (k1 * A71 + k3 * A73 + k4 * A74 + k5 * A75 + k6 * A76) * h;
            let k7 = bloch_rhs(&y_new, m);
            self.stats.rhs_evaluations += 6;
            let err_vec = (k1 * E1 + k3 * E3 + k4 * E4 + k5 * E5 + k6 * E6 + k7 * E7) * h;
            let err = self.norm(&err_vec, &y, &y_new);

            let growth = err.powf(EXPO);
            if err <= 1.0 {
                let fac = (growth / self.err_old.powf(BETA) / SAFETY)
                    .clamp(1.0 / MAX_GROWTH, 1.0 / MIN_SHRINK);
                self.err_old = err.max(1e-4);
                self.stats.accepted += 1;
                self.stats.max_error_estimate = self.stats.max_error_estimate.max(err);
                self.tau = if last { tau_limit } else { self.tau + h };
                self.y = y_new;
                self.f = k7;
                // Keep the controller's proposal even when the step was
                // shortened to land on `tau_limit`.
                let proposal = h / fac;
                self.h = if last { self.h.max(proposal) } else { proposal };
                let norm = y_new.norm();
                if !norm.is_finite() || norm > self.opts.drift_bound() {
                    return Err(Error::NormDrift {
                        tau: self.tau,
                        norm,
                    });
                }
                return Ok(());
            }
            self.stats.rejected += 1;
            self.h = h / (growth / SAFETY).min(1.0 / MIN_SHRINK);
        }
    }
}

fn validate_start(b0: &Vec3) -> Result<()> {
    BlochState::new(*b0, 0.0).map(|_| ())
}

/// Integrates from `b0` at `τ = 0` to `tau_end`.
pub fn evolve(
    model: &QubitModel,
    b0: Vec3,
    tau_end: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Trajectory> {
    evolve_with(
        model,
        b0,
        tau_end,
        &EvolveOptions::with_tolerances(rel_tol, abs_tol),
    )
}

pub fn evolve_with(
    model: &QubitModel,
    b0: Vec3,
    tau_end: f64,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    opts.validate()?;
    if !(tau_end > 0.0) || !tau_end.is_finite() {
        return Err(Error::param(
            "tau_end",
            tau_end,
            "must be positive and finite",
        ));
    }
    validate_start(&b0)?;
    let mut stepper = Stepper::new(model, b0, 0.0, *opts);
    let mut samples = vec![BlochState::unchecked(b0, 0.0)];
    let mut derivatives = vec![stepper.f];
    while stepper.tau < tau_end {
        stepper.step(tau_end)?;
        samples.push(BlochState::unchecked(stepper.y, stepper.tau));
        derivatives.push(stepper.f);
    }
    Ok(Trajectory {
        samples,
        derivatives,
        model: *model,
        stats: stepper.stats,
    })
}

/// Outcome of [`evolve_to_asymptote`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Asymptote {
    /// `|db/dτ|` stayed below the settle tolerance for at least one τ-unit.
    Converged { b: Vec3, tau: f64 },
    /// The oscillation amplitude of `|db/dτ|` did not decay by 1% over ten
    /// estimated periods.
    NonConvergent {
        tau: f64,
        /// Amplitude of the last period over that of ten periods earlier.
        amplitude_ratio: f64,
    },
}

impl Asymptote {
    pub fn state(&self) -> Option<Vec3> {
        match self {
            Asymptote::Converged { b, .. } => Some(*b),
            Asymptote::NonConvergent { .. } => None,
        }
    }
}

const NONCONVERGENCE_WINDOWS: usize = 10;
const NONCONVERGENCE_DECAY: f64 = 0.99;

/// Integrates until the flow settles or is classified as a persistent
/// oscillation.
pub fn evolve_to_asymptote(
    model: &QubitModel,
    b0: Vec3,
    settle_tol: f64,
    max_tau: f64,
) -> Result<Asymptote> {
    if !(settle_tol > 0.0) {
        return Err(Error::param("settle_tol", settle_tol, "must be positive"));
    }
    if !(max_tau > 0.0) {
        return Err(Error::param("max_tau", max_tau, "must be positive"));
    }
    validate_start(&b0)?;
    let opts = EvolveOptions::with_tolerances(1e-10, 1e-13);
    let mut stepper = Stepper::new(model, b0, 0.0, opts);
    let period = period_estimate(model.r());
    let mut calm_since: Option<f64> = (stepper.f.norm() < settle_tol).then_some(0.0);
    let mut window_max: Vec<f64> = vec![stepper.f.norm()];

    while stepper.tau < max_tau {
        // Never step across a window boundary so amplitudes are per period.
        let limit = match period {
            Some(p) => ((stepper.tau / p * (1.0 + 1e-12)).floor() + 1.0) * p,
            None => max_tau,
        }
        .min(max_tau);
        stepper.step(limit)?;
        let rate = stepper.f.norm();

        if rate < settle_tol {
            let since = *calm_since.get_or_insert(stepper.tau);
            if stepper.tau - since >= 1.0 {
                return Ok(Asymptote::Converged {
                    b: stepper.y,
                    tau: stepper.tau,
                });
            }
        } else {
            calm_since = None;
        }

        if let Some(p) = period {
            let k = ((stepper.tau / p) * (1.0 + 1e-12)).floor() as usize;
            if k >= window_max.len() {
                // Window `k - 1` is complete.
                let done = window_max.len() - 1;
                if done > NONCONVERGENCE_WINDOWS {
                    let now = window_max[done];
                    let before = window_max[done - NONCONVERGENCE_WINDOWS];
                    if before > 0.0 && now > NONCONVERGENCE_DECAY * before {
                        return Ok(Asymptote::NonConvergent {
                            tau: stepper.tau,
                            amplitude_ratio: now / before,
                        });
                    }
                }
                window_max.push(rate);
            } else {
                let last = window_max.last_mut().expect("non-empty");
                *last = last.max(rate);
            }
        }
    }
    Err(Error::MaxTauExceeded { max_tau })
}
