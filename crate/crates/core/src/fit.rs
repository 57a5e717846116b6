//! Weighted least-squares Fourier fits of flavour-asymmetry time series and
//! the extraction of `r` from the fitted coefficients.
//!
//! Datasets are CSV files with header `t_ps,asymmetry,sigma`. Lines starting
//! with `#` are comments; `# label: <text>` and `# omega: <value>` are read
//! as metadata.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::analytic::{restore_units, tilted_orbit};
use crate::fourier::{
    anharmonicity, correct_estimate, AnharmonicityEstimate, FourierSpectrum, SeriesKind,
};
use crate::{Error, Result};

/// Column header of the dataset format.
pub const CSV_HEADER: [&str; 3] = ["t_ps", "asymmetry", "sigma"];

/// Singular values below this fraction of the largest make the design
/// rank-deficient.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Relative half-width of the optional `ω` pre-scan.
pub const OMEGA_SCAN_WIDTH: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymmetryPoint {
    pub t: f64,
    pub delta: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymmetryDataset {
    points: Vec<AsymmetryPoint>,
    pub label: String,
    /// Angular frequency in ps⁻¹, if known.
    pub omega: Option<f64>,
}

impl AsymmetryDataset {
    pub fn new(
        points: Vec<AsymmetryPoint>,
        label: impl Into<String>,
        omega: Option<f64>,
    ) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            validate_point(p, i, points.get(i.wrapping_sub(1)), None)?;
        }
        if let Some(w) = omega {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::param("omega", w, "must be positive and finite"));
            }
        }
        Ok(Self {
            points,
            label: label.into(),
            omega,
        })
    }

    pub fn points(&self) -> &[AsymmetryPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn validate_point(
    p: &AsymmetryPoint,
    index: usize,
    previous: Option<&AsymmetryPoint>,
    line: Option<u64>,
) -> Result<()> {
    let at = |msg: String| Error::dataset(line, format!("row {}: {msg}", index + 1));
    if !p.t.is_finite() || !p.delta.is_finite() || !p.sigma.is_finite() {
        return Err(at("non-finite value".into()));
    }
    if !(p.sigma > 0.0) {
        return Err(at(format!("sigma = {} must be positive", p.sigma)));
    }
    if let Some(prev) = previous {
        if !(p.t > prev.t) {
            return Err(at(format!(
                "t = {} does not increase (previous {})",
                p.t, prev.t
            )));
        }
    }
    Ok(())
}

/// Reads a dataset, reporting the line of the first offending row.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<AsymmetryDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut omega = None;
    for (i, line) in text.lines().enumerate() {
        let Some(comment) = line.trim_start().strip_prefix('#') else {
            continue;
        };
        let Some((key, value)) = comment.split_once(':') else {
            continue;
        };
        match key.trim() {
            "label" => label = value.trim().to_string(),
            "omega" => {
                let w: f64 = value.trim().parse().map_err(|_| {
                    Error::dataset(Some(i as u64 + 1), format!("bad omega `{}`", value.trim()))
                })?;
                omega = Some(w);
            }
            _ => {}
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::dataset(
            Some(1),
            format!(
                "expected header `{}`, found `{}`",
                CSV_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut points: Vec<AsymmetryPoint> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line());
        if record.len() != 3 {
            return Err(Error::dataset(
                line,
                format!("expected 3 fields, found {}", record.len()),
            ));
        }
        let field = |k: usize| -> Result<f64> {
            record[k].parse().map_err(|_| {
                Error::dataset(
                    line,
                    format!("cannot parse {} = `{}`", CSV_HEADER[k], &record[k]),
                )
            })
        };
        let p = AsymmetryPoint {
            t: field(0)?,
            delta: field(1)?,
            sigma: field(2)?,
        };
        validate_point(&p, points.len(), points.last(), line)?;
        points.push(p);
    }
    if points.is_empty() {
        return Err(Error::dataset(None, "no data rows"));
    }
    AsymmetryDataset::new(points, label, omega)
}

/// Writes a dataset in the format read by [`load_dataset`]. Values use the
/// shortest decimal form that parses back to the same `f64`.
pub fn save_dataset(data: &AsymmetryDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::new();
    write_dataset(data, &mut out)?;
    fs::write(path, out)?;
    Ok(())
}

pub fn write_dataset<W: Write>(data: &AsymmetryDataset, mut out: W) -> Result<()> {
    if !data.label.is_empty() {
        writeln!(out, "# label: {}", data.label)?;
    }
    if let Some(w) = data.omega {
        writeln!(out, "# omega: {w}")?;
    }
    writeln!(out, "{}", CSV_HEADER.join(","))?;
    for p in &data.points {
        writeln!(out, "{},{},{}", p.t, p.delta, p.sigma)?;
    }
    Ok(())
}

/// A design column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Cos(usize),
    Sin(usize),
}

impl Mode {
    fn eval(&self, omega: f64, t: f64) -> f64 {
        match *self {
            Mode::Cos(n) => (n as f64 * omega * t).cos(),
            Mode::Sin(n) => (n as f64 * omega * t).sin(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub n_harmonics: usize,
    /// Overrides the dataset's `omega`.
    pub omega: Option<f64>,
    /// Adds `sin(nωt)` columns.
    pub sine_modes: bool,
    /// Refines `ω` within ±2% by minimising χ² before the final fit.
    pub omega_scan: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_harmonics: 2,
            omega: None,
            sine_modes: false,
            omega_scan: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub label: String,
    pub omega: f64,
    pub n_harmonics: usize,
    pub modes: Vec<Mode>,
    /// Parameters in the order of `modes`; the first `N+1` are `d_0..d_N`.
    pub params: Vec<f64>,
    pub errors: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub chi2: f64,
    pub dof: usize,
    /// Ratio of extreme singular values of the weighted design.
    pub condition: f64,
    /// `δ_i - model(t_i)`.
    pub residuals: Vec<f64>,
}

impl FitResult {
    /// `d_n`, `n ≤ N`.
    pub fn d(&self, n: usize) -> f64 {
        self.params[n]
    }

    pub fn d_err(&self, n: usize) -> f64 {
        self.errors[n]
    }

    pub fn reduced_chi2(&self) -> f64 {
        self.chi2 / self.dof as f64
    }

    /// Errors scaled by `√(χ²/dof)`, absorbing misfit into the uncertainty.
    pub fn scaled_errors(&self) -> Vec<f64> {
        let s = self.reduced_chi2().sqrt();
        self.errors.iter().map(|e| e * s).collect()
    }

    pub fn predict(&self, t: f64) -> f64 {
        self.modes
            .iter()
            .zip(&self.params)
            .map(|(m, p)| p * m.eval(self.omega, t))
            .sum()
    }

    /// The cosine part as an even spectrum with its covariance.
    pub fn spectrum(&self) -> FourierSpectrum {
        let k = self.n_harmonics + 1;
        let mut s = FourierSpectrum::new(
            self.params[0],
            self.params[1..k].to_vec(),
            SeriesKind::Even,
            self.omega,
        );
        s.errors = Some(self.errors[..k].to_vec());
        s.covariance = Some(
            (0..k)
                .map(|i| (0..k).map(|j| self.covariance[(i, j)]).collect())
                .collect(),
        );
        s
    }
}

/// Cosine fit with `N` harmonics at the dataset's `ω`.
pub fn fit_fourier_modes(data: &AsymmetryDataset, n_harmonics: usize) -> Result<FitResult> {
    fit_with(
        data,
        &FitOptions {
            n_harmonics,
            ..FitOptions::default()
        },
    )
}

pub fn fit_with(data: &AsymmetryDataset, opts: &FitOptions) -> Result<FitResult> {
    let omega = opts
        .omega
        .or(data.omega)
        .ok_or_else(|| Error::dataset(None, "no angular frequency supplied"))?;
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::param("omega", omega, "must be positive and finite"));
    }
    let mut modes: Vec<Mode> = (0..=opts.n_harmonics).map(Mode::Cos).collect();
    if opts.sine_modes {
        modes.extend((1..=opts.n_harmonics).map(Mode::Sin));
    }
    if data.len() < modes.len() + 1 {
        return Err(Error::dataset(
            None,
            format!(
                "{} points cannot constrain {} parameters with dof ≥ 1",
                data.len(),
                modes.len()
            ),
        ));
    }
    let omega = if opts.omega_scan {
        scan_omega(data, &modes, omega)?
    } else {
        omega
    };
    solve(data, modes, opts.n_harmonics, omega)
}

fn solve(
    data: &AsymmetryDataset,
    modes: Vec<Mode>,
    n_harmonics: usize,
    omega: f64,
) -> Result<FitResult> {
    let pts = data.points();
    let (m, p) = (pts.len(), modes.len());
    let a = DMatrix::from_fn(m, p, |i, j| modes[j].eval(omega, pts[i].t) / pts[i].sigma);
    let b = DVector::from_iterator(m, pts.iter().map(|q| q.delta / q.sigma));

    let svd = a.svd(true, true);
    let s = &svd.singular_values;
    let smax = s.max();
    let smin = s.min();
    let condition = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !(smin > RANK_TOLERANCE * smax) {
        return Err(Error::RankDeficient { condition });
    }
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let utb = u.transpose() * &b;
    let scaled = DVector::from_iterator(p, utb.iter().zip(s.iter()).map(|(x, sv)| x / sv));
    let x = vt.transpose() * scaled;

    let v = vt.transpose();
    let inv_s2 = DMatrix::from_diagonal(&s.map(|sv| 1.0 / (sv * sv)));
    let covariance = &v * inv_s2 * v.transpose();
    let covariance = (&covariance + covariance.transpose()) * 0.5;

    let params: Vec<f64> = x.iter().copied().collect();
    let residuals: Vec<f64> = pts
        .iter()
        .map(|q| {
            q.delta
                - modes
                    .iter()
                    .zip(&params)
                    .map(|(md, c)| c * md.eval(omega, q.t))
                    .sum::<f64>()
        })
        .collect();
    let chi2 = residuals
        .iter()
        .zip(pts)
        .map(|(r, q)| (r / q.sigma).powi(2))
        .sum();
    let errors = (0..p).map(|i| covariance[(i, i)].max(0.0).sqrt()).collect();
    Ok(FitResult {
        label: data.label.clone(),
        omega,
        n_harmonics,
        modes,
        params,
        errors,
        covariance,
        chi2,
        dof: m - p,
        condition,
        residuals,
    })
}

fn scan_omega(data: &AsymmetryDataset, modes: &[Mode], omega: f64) -> Result<f64> {
    let chi2 = |w: f64| {
        solve(data, modes.to_vec(), 0, w)
            .map(|f| f.chi2)
            .unwrap_or(f64::INFINITY)
    };
    let (lo, hi) = (
        omega * (1.0 - OMEGA_SCAN_WIDTH),
        omega * (1.0 + OMEGA_SCAN_WIDTH),
    );
    const GRID: usize = 41;
    let step = (hi - lo) / (GRID - 1) as f64;
    let best = (0..GRID)
        .map(|k| (k, chi2(lo + step * k as f64)))
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .map(|(k, _)| k)
        .expect("grid is non-empty");
    let mut a = lo + step * best.saturating_sub(1) as f64;
    let mut b = lo + step * (best + 1).min(GRID - 1) as f64;
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (chi2(c), chi2(d));
    while (b - a).abs() > 1e-12 * omega {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = chi2(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = chi2(d);
        }
    }
    Ok(0.5 * (a + b))
}

/// Two-sided Student-t p-values for `param = 0`, one per fitted parameter;
/// `None` where the standard error is zero.
pub fn coefficient_pvalues(fit: &FitResult) -> Result<Vec<Option<f64>>> {
    if fit.dof < 1 {
        return Err(Error::param(
            "dof",
            fit.dof as f64,
            "at least one degree of freedom",
        ));
    }
    let dist = StudentsT::new(0.0, 1.0, fit.dof as f64).expect("dof ≥ 1");
    Ok(fit
        .params
        .iter()
        .zip(&fit.errors)
        .map(|(&v, &e)| {
            if e > 0.0 && e.is_finite() {
                Some((2.0 * dist.sf((v / e).abs())).min(1.0))
            } else {
                None
            }
        })
        .collect())
}

/// Per-ratio `r` estimates and their inverse-variance weighted average.
#[derive(Debug, Clone, Serialize)]
pub struct RExtraction {
    pub per_ratio: Vec<AnharmonicityEstimate>,
    /// Whether each estimate entered the weighted average.
    pub used: Vec<bool>,
    pub weighted_r: Option<f64>,
    pub weighted_r_err: Option<f64>,
    pub diagnostic: Option<String>,
}

/// Builds `D_0 … D_(N-1)`, maps each to `r`, applies the amplitude
/// correction when `amplitude` is given, and averages.
///
/// With `amplitude < 1` the `D_0` estimate is reported but left out of the
/// average: the constant term of a shrunken orbit is not the `d_0` of the
/// unit orbit, so `D_0` does not measure the effective `r`.
pub fn estimate_r(fit: &FitResult, amplitude: Option<f64>) -> Result<RExtraction> {
    if fit.n_harmonics < 2 {
        return Err(Error::param(
            "N",
            fit.n_harmonics as f64,
            "at least two harmonics",
        ));
    }
    let spectrum = fit.spectrum();
    let mut per_ratio = Vec::with_capacity(fit.n_harmonics);
    let mut used = Vec::with_capacity(fit.n_harmonics);
    for order in 0..fit.n_harmonics {
        let mut est = anharmonicity(&spectrum, order)?;
        if let Some(a) = amplitude {
            est = correct_estimate(&est, a)?;
        }
        let shrunk_d0 = order == 0 && amplitude.is_some_and(|a| a < 1.0);
        used.push(est.reliable && est.r_hat.is_finite() && est.r_err.is_finite() && !shrunk_d0);
        per_ratio.push(est);
    }
    let pairs: Vec<(f64, f64)> = per_ratio
        .iter()
        .zip(&used)
        .filter(|(_, &u)| u)
        .map(|(e, _)| (e.r_hat, e.r_err))
        .collect();
    let avg = weighted_average(&pairs);
    let diagnostic = avg
        .is_none()
        .then(|| "every ratio has a denominator consistent with zero; no weighted r".to_string());
    Ok(RExtraction {
        per_ratio,
        used,
        weighted_r: avg.map(|a| a.0),
        weighted_r_err: avg.map(|a| a.1),
        diagnostic,
    })
}

/// Inverse-variance weighted mean of `(value, error)` pairs. Exact values
/// (zero error) dominate: their plain mean is returned with zero error.
pub fn weighted_average(pairs: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pairs.is_empty() {
        return None;
    }
    let exact: Vec<f64> = pairs.iter().filter(|p| p.1 == 0.0).map(|p| p.0).collect();
    if !exact.is_empty() {
        return Some((exact.iter().sum::<f64>() / exact.len() as f64, 0.0));
    }
    let (sw, swx) = pairs.iter().fold((0.0, 0.0), |(sw, swx), &(x, e)| {
        (sw + 1.0 / (e * e), swx + x / (e * e))
    });
    Some((swx / sw, sw.sqrt().recip()))
}

/// Per-point noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseSchedule {
    Constant(f64),
    /// `σ(t) = sigma0 · exp(t / scale)`.
    Widening {
        sigma0: f64,
        scale: f64,
    },
}

impl NoiseSchedule {
    pub fn sigma_at(&self, t: f64) -> f64 {
        match *self {
            NoiseSchedule::Constant(s) => s,
            NoiseSchedule::Widening { sigma0, scale } => sigma0 * (t / scale).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisSpec {
    pub r: f64,
    pub e_mag: f64,
    pub n_points: usize,
    /// Span in ps; samples sit at `i·t_max/n`, `i = 0..n`.
    pub t_max: f64,
    pub noise: NoiseSchedule,
    pub seed: u64,
    /// Radius of the pure orbit, 1 for a maximal start.
    pub amplitude: f64,
    pub label: String,
}

impl SynthesisSpec {
    pub fn new(
        r: f64,
        e_mag: f64,
        n_points: usize,
        t_max: f64,
        noise_sigma: f64,
        seed: u64,
    ) -> Self {
        Self {
            r,
            e_mag,
            n_points,
            t_max,
            noise: NoiseSchedule::Constant(noise_sigma),
            seed,
            amplitude: 1.0,
            label: format!("synthetic r={r}"),
        }
    }
}

/// Samples `δ(t) = b·(e×γ)` of a pure critical orbit at `τ = 2r|E|t` and
/// adds Gaussian noise. Points with zero noise carry `sigma = 1`.
pub fn synthesize_dataset(spec: &SynthesisSpec) -> Result<AsymmetryDataset> {
    let clock = restore_units(spec.r, spec.e_mag)?;
    if spec.r == 0.0 {
        return Err(Error::param("r", 0.0, "must lie in (0, 1)"));
    }
    if spec.n_points < 2 {
        return Err(Error::param("n_points", spec.n_points as f64, "at least 2"));
    }
    if !(spec.t_max > 0.0 && spec.t_max.is_finite()) {
        return Err(Error::param(
            "t_max",
            spec.t_max,
            "must be positive and finite",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gamma_mag = 2.0 * spec.r * spec.e_mag;
    let mut points = Vec::with_capacity(spec.n_points);
    for i in 0..spec.n_points {
        let t = spec.t_max * i as f64 / spec.n_points as f64;
        let clean = tilted_orbit(gamma_mag * t, spec.r, spec.amplitude)?.b_exg;
        let sigma = spec.noise.sigma_at(t);
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::param(
                "noise sigma",
                sigma,
                "must be finite and non-negative",
            ));
        }
        let (delta, sigma) = if sigma > 0.0 {
            let noise = Normal::new(0.0, sigma)
                .expect("valid sigma")
                .sample(&mut rng);
            (clean + noise, sigma)
        } else {
            (clean, 1.0)
        };
        points.push(AsymmetryPoint { t, delta, sigma });
    }
    AsymmetryDataset::new(points, spec.label.clone(), Some(clock.omega))
}

#[derive(Debug, Clone, Serialize)]
pub struct CoefficientReport {
    pub n: usize,
    pub value: f64,
    pub error: f64,
    pub scaled_error: f64,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct REstimateReport {
    pub kind: String,
    pub order: usize,
    pub ratio: f64,
    pub ratio_err: f64,
    pub r: f64,
    pub r_err: f64,
    pub reliable: bool,
    pub averaged: bool,
}

/// Machine-readable fit summary.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub label: String,
    pub omega: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub coefficients: Vec<CoefficientReport>,
    pub chi2: f64,
    pub dof: usize,
    pub r_estimates: Vec<REstimateReport>,
    pub weighted_r: Option<f64>,
    pub weighted_r_err: Option<f64>,
}

impl FitReport {
    pub fn new(fit: &FitResult, extraction: Option<&RExtraction>) -> Result<Self> {
        let pvalues = coefficient_pvalues(fit)?;
        let scaled = fit.scaled_errors();
        let coefficients = (0..=fit.n_harmonics)
            .map(|n| CoefficientReport {
                n,
                value: fit.params[n],
                error: fit.errors[n],
                scaled_error: scaled[n],
                p_value: pvalues[n],
            })
            .collect();
        let r_estimates = extraction
            .map(|x| {
                x.per_ratio
                    .iter()
                    .zip(&x.used)
                    .map(|(e, &u)| REstimateReport {
                        kind: e.kind.label().to_string(),
                        order: e.order,
                        ratio: e.ratio,
                        ratio_err: e.ratio_err,
                        r: e.r_hat,
                        r_err: e.r_err,
                        reliable: e.reliable,
                        averaged: u,
                    })
                    .collect()
            })
            .unwrap_or_default();
        Ok(Self {
            label: fit.label.clone(),
            omega: fit.omega,
            n: fit.n_harmonics,
            coefficients,
            chi2: fit.chi2,
            dof: fit.dof,
            r_estimates,
            weighted_r: extraction.and_then(|x| x.weighted_r),
            weighted_r_err: extraction.and_then(|x| x.weighted_r_err),
        })
    }
}
