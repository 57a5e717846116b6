use anyhow::{Context, Result};
use rayon::prelude::*;
use serde_json::{json, Value};

use cuq::analytic::{cuq_clock, restore_units};
use cuq::bloch::{BlochState, QubitModel};
use cuq::fit::{
    estimate_r, fit_with, load_dataset, synthesize_dataset, write_dataset, FitOptions, FitReport,
    NoiseSchedule, SynthesisSpec,
};
use cuq::fourier::{
    anharmonicity, closed_form_spectrum, quadrature_spectrum, ratio_q, SeriesKind, MAX_HARMONIC,
};
use cuq::integrate::{evolve, evolve_to_asymptote, Asymptote};
use cuq::meson::{
    bloch_from_observables, catalogue_json, classify_damping, observables_from_bloch,
    write_catalogue_csv, BlochParameters, MesonObservables,
};
use cuq::Vec3;

use crate::{
    num, ConvertArgs, FitArgs, FlagError, Format, FourierArgs, SimulateArgs, Sink, Span, SweepArgs,
    SynthesizeArgs,
};

fn flag(msg: impl Into<String>) -> anyhow::Error {
    FlagError(msg.into()).into()
}

fn parse_b0(spec: &str, model: &QubitModel) -> Result<Vec3> {
    let b = match spec.trim() {
        "exg" => {
            let v = model.e_cross_gamma();
            if v.norm() < 1e-12 {
                return Err(flag("--b0 exg is undefined when e ∥ γ"));
            }
            v.normalize()
        }
        "gamma" => *model.gamma(),
        "-gamma" => -model.gamma(),
        "e" => *model.e(),
        "-e" => -model.e(),
        "mixed" | "0" => Vec3::zeros(),
        other => {
            let parts: Vec<f64> = other
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| {
                    flag(format!(
                        "--b0 `{other}`: expected exg, gamma, -gamma, e, -e, mixed or x,y,z"
                    ))
                })?;
            if parts.len() != 3 {
                return Err(flag(format!("--b0 `{other}` needs three components")));
            }
            Vec3::new(parts[0], parts[1], parts[2])
        }
    };
    BlochState::new(b, 0.0)?;
    Ok(b)
}

pub fn simulate(a: &SimulateArgs, sink: &Sink) -> Result<()> {
    let model = QubitModel::from_angle(a.r, a.theta_eg.to_radians(), a.e_mag)?;
    let b0 = parse_b0(&a.b0, &model)?;
    if a.samples.is_some_and(|n| n < 2) {
        return Err(flag("--samples must be at least 2"));
    }
    let period = if a.r < 1.0 {
        Some(cuq_clock(a.r)?.p_hat)
    } else {
        None
    };
    let default = if period.is_some() {
        Span::Periods(3.0)
    } else {
        Span::Absolute(40.0)
    };
    let t_max = a.t_max.unwrap_or(default).resolve(period)?;

    let traj = evolve(&model, b0, t_max, a.rel_tol, a.abs_tol)?;
    let states = match a.samples {
        Some(n) => traj.resample(n),
        None => traj.samples().to_vec(),
    };
    let exg = model.e_cross_gamma();
    let row = |s: &BlochState| {
        let b = s.b();
        [
            s.tau(),
            b[0],
            b[1],
            b[2],
            b.norm(),
            b.dot(model.gamma()),
            b.dot(&exg),
        ]
    };
    sink.emit(
        "simulate",
        || {
            let mut out = String::from("tau,b1,b2,b3,b_mag,b_dot_gamma,b_dot_exg\n");
            for s in &states {
                let v = row(s).map(num);
                out.push_str(&v.join(","));
                out.push('\n');
            }
            out
        },
        || {
            let samples: Vec<Value> = states
                .iter()
                .map(|s| {
                    let v = row(s);
                    json!({"tau": v[0], "b": [v[1], v[2], v[3]], "b_mag": v[4], "b_dot_gamma": v[5], "b_dot_exg": v[6]})
                })
                .collect();
            Ok(serde_json::to_string_pretty(&json!({
                "r": a.r,
                "theta_eg_deg": a.theta_eg,
                "e_mag": a.e_mag,
                "period": period,
                "t_max": t_max,
                "stats": traj.stats(),
                "samples": samples,
            }))?)
        },
    )
}

struct SweepRow {
    r: f64,
    b0_mag: f64,
    max_b: f64,
    horizon: f64,
}

fn sweep_point(r: f64, b0_mag: f64) -> Result<SweepRow> {
    let model = QubitModel::perpendicular(r, 1.0)?;
    let b0 = model.gamma() * b0_mag;
    let horizon = if r < 1.0 {
        5.0 * cuq_clock(r)?.p_hat
    } else {
        match evolve_to_asymptote(&model, b0, 1e-10, 1e6)? {
            Asymptote::Converged { tau, .. } => tau,
            Asymptote::NonConvergent { tau, .. } => tau,
        }
    };
    let traj = evolve(&model, b0, horizon, 1e-10, 1e-13)?;
    let steps = traj.samples().iter().map(|s| s.norm()).fold(0.0, f64::max);
    let dense = traj
        .resample(20_001)
        .iter()
        .map(|s| s.norm())
        .fold(0.0, f64::max);
    Ok(SweepRow {
        r,
        b0_mag,
        max_b: steps.max(dense),
        horizon,
    })
}

pub fn sweep_bmax(a: &SweepArgs, sink: &Sink) -> Result<()> {
    if let Some(r) = a.r.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(flag(format!("--r {r}: must be positive")));
    }
    if let Some(m) = a.b0_mag.iter().find(|m| !(0.0..=1.0).contains(*m)) {
        return Err(flag(format!("--b0-mag {m}: must lie in [0, 1]")));
    }
    let grid: Vec<(f64, f64)> =
        a.r.iter()
            .flat_map(|&r| a.b0_mag.iter().map(move |&m| (r, m)))
            .collect();
    let rows = grid
        .par_iter()
        .map(|&(r, m)| sweep_point(r, m))
        .collect::<Result<Vec<_>>>()?;
    sink.emit(
        "sweep_bmax",
        || {
            let mut out = String::from("r,b0_mag,max_b_mag,horizon_tau\n");
            for row in &rows {
                out.push_str(&format!("{},{},{},{}\n", num(row.r), num(row.b0_mag), num(row.max_b), num(row.horizon)));
            }
            out
        },
        || {
            let v: Vec<Value> = rows
                .iter()
                .map(|row| json!({"r": row.r, "b0_mag": row.b0_mag, "max_b_mag": row.max_b, "horizon_tau": row.horizon}))
                .collect();
            Ok(serde_json::to_string_pretty(&v)?)
        },
    )
}

pub fn fourier(a: &FourierArgs, sink: &Sink) -> Result<()> {
    if !(a.r > 0.0 && a.r < 1.0) {
        return Err(flag(format!("--r {}: the spectrum needs 0 < r < 1", a.r)));
    }
    if a.n == 0 || a.n > MAX_HARMONIC {
        return Err(flag(format!("-n {}: must lie in 1..={MAX_HARMONIC}", a.n)));
    }
    let r = a.r;
    let clock = cuq_clock(r)?;
    let mut rows: Vec<(SeriesKind, usize, f64, f64)> = Vec::new();
    let mut estimates = Vec::new();
    for kind in [SeriesKind::Odd, SeriesKind::Even] {
        let closed = closed_form_spectrum(r, a.n, kind)?;
        let quad = quadrature_spectrum(
            |t| {
                let p = cuq::analytic::cuq_projections(t, r).expect("0 < r < 1");
                match kind {
                    SeriesKind::Odd => p.b_gamma,
                    SeriesKind::Even => p.b_exg,
                }
            },
            clock.p_hat,
            a.n,
            kind,
        )?;
        if kind == SeriesKind::Even {
            rows.push((kind, 0, closed.d0, quad.d0));
        }
        for n in 1..=a.n {
            rows.push((kind, n, closed.coeffs[n - 1], quad.coeffs[n - 1]));
        }
        let first = if kind == SeriesKind::Even { 0 } else { 1 };
        for order in first..a.n {
            let est = anharmonicity(&quad, order)?;
            estimates.push(
                json!({"series": kind.label(), "order": order, "ratio": est.ratio, "r": est.r_hat}),
            );
        }
    }
    let max_dev = rows.iter().map(|r| (r.2 - r.3).abs()).fold(0.0, f64::max);
    sink.emit(
        "fourier",
        || {
            let mut out = String::from("series,n,closed_form,quadrature,deviation\n");
            for (kind, n, c, q) in &rows {
                out.push_str(&format!("{},{n},{},{},{}\n", kind.label(), num(*c), num(*q), num((c - q).abs())));
            }
            out
        },
        || {
            let v: Vec<Value> = rows
                .iter()
                .map(|(kind, n, c, q)| json!({"series": kind.label(), "n": n, "closed_form": c, "quadrature": q, "deviation": (c - q).abs()}))
                .collect();
            Ok(serde_json::to_string_pretty(&json!({
                "r": r,
                "q": ratio_q(r),
                "p_hat": clock.p_hat,
                "omega_hat": clock.omega_hat,
                "max_deviation": max_dev,
                "coefficients": v,
                "anharmonicity": estimates,
            }))?)
        },
    )
}

fn bloch_json(p: &BlochParameters) -> Value {
    json!({"r": p.r, "theta_eg_deg": p.theta_eg, "e_mag": p.e_mag})
}

fn observables_json(o: &MesonObservables) -> Value {
    json!({
        "delta_E": o.delta_e,
        "delta_Gamma": o.delta_gamma,
        "q_over_p": o.q_over_p,
        "q_over_p_minus_1": o.q_over_p - 1.0,
    })
}

pub fn convert(a: &ConvertArgs, sink: &Sink) -> Result<()> {
    let out = match (&a.from_bloch, &a.from_observables) {
        (Some(v), _) => {
            let p = BlochParameters::new(v[0], v[1], v[2])?;
            let o = observables_from_bloch(&p);
            json!({
                "input": "bloch",
                "bloch": bloch_json(&p),
                "observables": observables_json(&o),
                "damping": classify_damping(p.r)?.to_string(),
            })
        }
        (None, Some(v)) => {
            let o = MesonObservables::new(v[0], v[1], v[2])?;
            let inv = bloch_from_observables(&o)?;
            json!({
                "input": "observables",
                "observables": observables_json(&o),
                "bloch": bloch_json(&inv.primary),
                "mirror": bloch_json(&inv.mirror),
                "cuq_branch": inv.cuq_branch,
                "damping": classify_damping(inv.primary.r)?.to_string(),
            })
        }
        (None, None) => {
            return Err(flag(
                "one of --from-bloch or --from-observables is required",
            ))
        }
    };
    sink.write("convert.json", &serde_json::to_string_pretty(&out)?)
}

fn percent(p: Option<f64>) -> String {
    match p {
        None => "n/a".into(),
        Some(p) if p < 1e-4 => "< 0.01%".into(),
        Some(p) => format!("{:.0}%", 100.0 * p),
    }
}

fn summary_table(report: &FitReport) -> String {
    let mut s = format!(
        "{}\nω = {} ps⁻¹, N = {}, χ² = {:.3} for {} dof\n\n  n  {:>22}  {:>9}\n",
        report.label, report.omega, report.n, report.chi2, report.dof, "d_n ± δd_n", "p-value"
    );
    for c in &report.coefficients {
        s.push_str(&format!(
            "  {}  {:>22}  {:>9}\n",
            c.n,
            format!("{:.4} ± {:.4}", c.value, c.error),
            percent(c.p_value)
        ));
    }
    if !report.r_estimates.is_empty() {
        s.push_str(&format!(
            "\n  {:<5}  {:>22}  {:>18}\n",
            "ratio", "value", "r"
        ));
        for e in &report.r_estimates {
            let mark = if e.averaged { "" } else { " *" };
            s.push_str(&format!(
                "  {:<5}  {:>22}  {:>18}{mark}\n",
                format!("{}_{}", e.kind, e.order),
                format!("{:.4} ± {:.4}", e.ratio, e.ratio_err),
                format!("{:.3} ± {:.3}", e.r, e.r_err),
            ));
        }
        match (report.weighted_r, report.weighted_r_err) {
            (Some(r), Some(e)) => s.push_str(&format!("\nweighted r = {r:.3} ± {e:.3}\n")),
            _ => s.push_str("\nno weighted r: every ratio is consistent with a zero denominator\n"),
        }
        if report.r_estimates.iter().any(|e| !e.averaged) {
            s.push_str("* left out of the weighted average\n");
        }
    }
    s
}

pub fn fit(a: &FitArgs, sink: &Sink) -> Result<()> {
    if a.n_harmonics == 0 {
        return Err(flag("--n-harmonics must be at least 1"));
    }
    if let Some(w) = a.omega {
        if !(w > 0.0 && w.is_finite()) {
            return Err(flag(format!("--omega {w}: must be positive")));
        }
    }
    if let Some(r) = a.amplitude {
        if !(r > 0.0 && r <= 1.0) {
            return Err(flag(format!("--amplitude {r}: must lie in (0, 1]")));
        }
    }
    let data =
        load_dataset(&a.dataset).with_context(|| format!("reading {}", a.dataset.display()))?;
    let opts = FitOptions {
        n_harmonics: a.n_harmonics,
        omega: a.omega,
        sine_modes: a.sine_modes,
        omega_scan: a.omega_scan,
    };
    let result = fit_with(&data, &opts)?;
    let extraction = if a.n_harmonics >= 2 {
        Some(estimate_r(&result, a.amplitude)?)
    } else {
        None
    };
    let report = FitReport::new(&result, extraction.as_ref())?;
    let report_json = serde_json::to_string_pretty(&report)?;
    if sink.to_dir() {
        let mut res = String::from("t_ps,asymmetry,sigma,model,residual\n");
        for (p, r) in data.points().iter().zip(&result.residuals) {
            res.push_str(&format!(
                "{},{},{},{},{}\n",
                num(p.t),
                num(p.delta),
                num(p.sigma),
                num(result.predict(p.t)),
                num(*r)
            ));
        }
        sink.write("fit.json", &report_json)?;
        sink.write("residuals.csv", &res)?;
        print!("{}", summary_table(&report));
        Ok(())
    } else {
        match sink.format {
            Format::Json => sink.write("fit.json", &report_json),
            Format::Csv => sink.write("fit.txt", &summary_table(&report)),
        }
    }
}

pub fn catalogue(sink: &Sink) -> Result<()> {
    sink.emit(
        "catalogue",
        || {
            let mut buf = Vec::new();
            write_catalogue_csv(&mut buf).expect("in-memory write");
            String::from_utf8(buf).expect("utf-8")
        },
        || Ok(catalogue_json()?),
    )
}

pub fn synthesize(a: &SynthesizeArgs, seed: u64, sink: &Sink) -> Result<()> {
    if !(a.r > 0.0 && a.r < 1.0) {
        return Err(flag(format!("--r {}: synthetic data needs 0 < r < 1", a.r)));
    }
    if !(a.sigma >= 0.0 && a.sigma.is_finite()) {
        return Err(flag(format!("--sigma {}: must be non-negative", a.sigma)));
    }
    if !(a.amplitude > 0.0 && a.amplitude <= 1.0) {
        return Err(flag(format!(
            "--amplitude {}: must lie in (0, 1]",
            a.amplitude
        )));
    }
    if let Some(s) = a.widen_scale {
        if !(s > 0.0 && s.is_finite()) {
            return Err(flag(format!("--widen-scale {s}: must be positive")));
        }
    }
    let period = restore_units(a.r, a.e_mag)?.period;
    let t_max = a.t_max.resolve(Some(period))?;
    let mut spec = SynthesisSpec::new(a.r, a.e_mag, a.n_points, t_max, a.sigma, seed);
    spec.amplitude = a.amplitude;
    if let Some(scale) = a.widen_scale {
        spec.noise = NoiseSchedule::Widening {
            sigma0: a.sigma,
            scale,
        };
    }
    if let Some(label) = &a.label {
        spec.label = label.clone();
    }
    let data = synthesize_dataset(&spec)?;
    sink.emit(
        "synthetic",
        || {
            let mut buf = Vec::new();
            write_dataset(&data, &mut buf).expect("in-memory write");
            String::from_utf8(buf).expect("utf-8")
        },
        || Ok(serde_json::to_string_pretty(&data)?),
    )
}
