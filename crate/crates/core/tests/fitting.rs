use std::io::Write;

use cuq::analytic::effective_r;
use cuq::analytic::restore_units;
use cuq::fit::{
    coefficient_pvalues, estimate_r, fit_fourier_modes, fit_with, load_dataset, save_dataset,
    synthesize_dataset, weighted_average, AsymmetryDataset, AsymmetryPoint, FitOptions, Mode,
    NoiseSchedule, SynthesisSpec,
};
use cuq::fourier::{
    closed_form_cn, closed_form_d0, correct_effective_r, r_from_anharmonicity,
    AnharmonicityEstimate, SeriesKind,
};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ContinuousCDF, Uniform};

const E_MAG: f64 = 0.3;

fn periods_span(r: f64, periods: f64) -> f64 {
    let omega = restore_units(r, E_MAG).unwrap().omega;
    periods * 2.0 * std::f64::consts::PI / omega
}

fn spec(r: f64, n: usize, periods: f64, sigma: f64, seed: u64) -> SynthesisSpec {
    SynthesisSpec::new(r, E_MAG, n, periods_span(r, periods), sigma, seed)
}

#[test]
fn three_line_file_loads() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(
        f,
        "t_ps,asymmetry,sigma\n0.0,0.5,0.1\n1.5,0.2,0.1\n3.0,-0.4,0.2"
    )
    .unwrap();
    let d = load_dataset(f.path()).unwrap();
    assert_eq!(d.len(), 3);
    assert_eq!(
        d.points()[2],
        AsymmetryPoint {
            t: 3.0,
            delta: -0.4,
            sigma: 0.2
        }
    );
}

#[test]
fn zero_sigma_row_is_named() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "t_ps,asymmetry,sigma\n0.0,0.5,0.1\n1.5,0.2,0").unwrap();
    let err = load_dataset(f.path()).unwrap_err();
    assert!(err.is_data_error());
    assert!(err.to_string().contains("line 3"), "{err}");
}

#[test]
fn export_roundtrips_bit_identically() {
    let data = synthesize_dataset(&spec(0.85, 50, 3.0, 0.05, 11)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("synthetic.csv");
    save_dataset(&data, &path).unwrap();
    let back = load_dataset(&path).unwrap();
    assert_eq!(back, data);
    for (a, b) in back.points().iter().zip(data.points()) {
        assert_eq!(a.delta.to_bits(), b.delta.to_bits());
        assert_eq!(a.t.to_bits(), b.t.to_bits());
    }
}

#[test]
fn synthesis_is_deterministic_and_exact_without_noise() {
    let a = synthesize_dataset(&spec(0.85, 40, 2.0, 0.05, 5)).unwrap();
    let b = synthesize_dataset(&spec(0.85, 40, 2.0, 0.05, 5)).unwrap();
    let c = synthesize_dataset(&spec(0.85, 40, 2.0, 0.05, 6)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    let clean = synthesize_dataset(&spec(0.85, 40, 2.0, 0.0, 5)).unwrap();
    let gamma = 2.0 * 0.85 * E_MAG;
    for p in clean.points() {
        let exact = cuq::analytic::cuq_projections(gamma * p.t, 0.85)
            .unwrap()
            .b_exg;
        assert_eq!(p.delta, exact);
        assert_eq!(p.sigma, 1.0);
    }
}

#[test]
fn widening_noise_schedule() {
    let mut s = spec(0.5, 30, 2.0, 0.0, 1);
    s.noise = NoiseSchedule::Widening {
        sigma0: 0.02,
        scale: 5.0,
    };
    let d = synthesize_dataset(&s).unwrap();
    let sig: Vec<f64> = d.points().iter().map(|p| p.sigma).collect();
    assert!(sig.windows(2).all(|w| w[1] > w[0]));
    assert_eq!(sig[0], 0.02);
}

#[test]
fn pure_cosine_is_recovered_exactly() {
    let omega = 0.7;
    let points = (0..40)
        .map(|i| {
            let t = i as f64 * 0.31;
            AsymmetryPoint {
                t,
                delta: (omega * t).cos(),
                sigma: 0.1,
            }
        })
        .collect();
    let d = AsymmetryDataset::new(points, "cos", Some(omega)).unwrap();
    let fit = fit_fourier_modes(&d, 3).unwrap();
    assert!((fit.d(1) - 1.0).abs() < 1e-10);
    for n in [0, 2, 3] {
        assert!(fit.d(n).abs() < 1e-10);
    }
    assert!(fit.chi2 < 1e-16);
}

#[test]
fn noiseless_critical_spectrum_to_six_harmonics() {
    let r = 0.85;
    let d = synthesize_dataset(&spec(r, 200, 4.0, 0.0, 0)).unwrap();
    let fit = fit_fourier_modes(&d, 6).unwrap();
    assert!((fit.d(0) - closed_form_d0(r).unwrap()).abs() < 1e-6);
    for n in 1..=6 {
        assert!(
            (fit.d(n) - closed_form_cn(n, r).unwrap()).abs() < 1e-6,
            "d_{n}"
        );
    }
    let ex = estimate_r(&fit, None).unwrap();
    for e in &ex.per_ratio {
        assert!((e.r_hat - r).abs() < 1e-6, "order {}: {}", e.order, e.r_hat);
    }
    assert!((ex.weighted_r.unwrap() - r).abs() < 1e-6);
}

#[test]
fn residuals_orthogonal_to_design() {
    let mut s = spec(0.6, 80, 3.0, 0.05, 3);
    s.noise = NoiseSchedule::Widening {
        sigma0: 0.03,
        scale: 20.0,
    };
    let d = synthesize_dataset(&s).unwrap();
    let fit = fit_with(
        &d,
        &FitOptions {
            n_harmonics: 3,
            sine_modes: true,
            ..FitOptions::default()
        },
    )
    .unwrap();
    for m in &fit.modes {
        let (mut dot, mut norm) = (0.0, 0.0);
        for (p, res) in d.points().iter().zip(&fit.residuals) {
            let col = match *m {
                Mode::Cos(n) => (n as f64 * fit.omega * p.t).cos(),
                Mode::Sin(n) => (n as f64 * fit.omega * p.t).sin(),
            } / p.sigma;
            dot += col * res / p.sigma;
            norm += col.abs() * (res / p.sigma).abs();
        }
        assert!(dot.abs() <= 1e-10 * norm, "{m:?}: {dot} vs {norm}");
    }
}

#[test]
fn aliased_design_is_rank_deficient() {
    let omega = 1.0;
    let period = 2.0 * std::f64::consts::PI;
    let points = (0..10)
        .map(|i| AsymmetryPoint {
            t: i as f64 * period,
            delta: 0.3,
            sigma: 0.1,
        })
        .collect();
    let d = AsymmetryDataset::new(points, "aliased", Some(omega)).unwrap();
    let err = fit_fourier_modes(&d, 2).unwrap_err();
    assert!(matches!(err, cuq::Error::RankDeficient { .. }), "{err}");
}

#[test]
fn first_harmonic_is_unbiased() {
    let r = 0.85;
    let truth = closed_form_cn(1, r).unwrap();
    let fits: Vec<(f64, f64)> = (0..200)
        .map(|seed| {
            let fit = fit_fourier_modes(
                &synthesize_dataset(&spec(r, 50, 3.0, 0.05, seed)).unwrap(),
                2,
            )
            .unwrap();
            (fit.d(1), fit.d_err(1))
        })
        .collect();
    let mean = fits.iter().map(|f| f.0).sum::<f64>() / 200.0;
    let sd = (fits.iter().map(|f| (f.0 - mean).powi(2)).sum::<f64>() / 199.0).sqrt();
    assert!(
        (mean - truth).abs() < 3.0 * sd / 200f64.sqrt(),
        "mean {mean} truth {truth} sd {sd}"
    );
    // Reported errors track the scatter.
    assert!((fits[0].1 / sd - 1.0).abs() < 0.2);
}

#[test]
fn null_pvalues_are_uniform() {
    let normal = Normal::new(0.0, 0.05).unwrap();
    let mut pvals: Vec<f64> = (0..200u64)
        .map(|seed| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let points = (0..50)
                .map(|i| AsymmetryPoint {
                    t: i as f64 * 0.2,
                    delta: normal.sample(&mut rng),
                    sigma: 0.05,
                })
                .collect();
            let d = AsymmetryDataset::new(points, "noise", Some(0.51)).unwrap();
            coefficient_pvalues(&fit_fourier_modes(&d, 2).unwrap()).unwrap()[2].unwrap()
        })
        .collect();
    pvals.sort_by(f64::total_cmp);
    let u = Uniform::new(0.0, 1.0).unwrap();
    let n = pvals.len() as f64;
    let ks = pvals
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let c = u.cdf(p);
            (c - i as f64 / n)
                .abs()
                .max((((i + 1) as f64) / n - c).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.15, "KS {ks}");
}

#[test]
fn pvalue_limits() {
    let d = synthesize_dataset(&spec(0.5, 30, 2.0, 0.05, 9)).unwrap();
    let mut fit = fit_fourier_modes(&d, 2).unwrap();
    fit.params[2] = 0.0;
    fit.params[1] = 1e6;
    fit.errors[0] = 0.0;
    let p = coefficient_pvalues(&fit).unwrap();
    assert_eq!(p[0], None);
    assert!(p[1].unwrap() < 1e-100);
    assert_eq!(p[2], Some(1.0));
}

#[test]
fn amplitude_correction_recovers_true_r() {
    let r = 0.6;
    for amplitude in [0.4, 0.63, 0.9] {
        let mut s = spec(r, 200, 3.0, 0.0, 0);
        s.amplitude = amplitude;
        let fit = fit_fourier_modes(&synthesize_dataset(&s).unwrap(), 6).unwrap();
        let raw = estimate_r(&fit, None).unwrap();
        let corrected = estimate_r(&fit, Some(amplitude)).unwrap();
        let r_tilde = effective_r(r, amplitude).unwrap();
        for order in 1..6 {
            assert!(
                (raw.per_ratio[order].r_hat - r_tilde).abs() < 1e-6,
                "R {amplitude} order {order}"
            );
            assert!((corrected.per_ratio[order].r_hat - r).abs() < 1e-6);
        }
        assert!(!corrected.used[0]);
        assert!((corrected.weighted_r.unwrap() - r).abs() < 1e-6);
    }
}

#[test]
fn omega_scan_repairs_small_miscalibration() {
    let r = 0.5;
    let d = synthesize_dataset(&spec(r, 120, 6.0, 0.0, 0)).unwrap();
    let true_omega = d.omega.unwrap();
    let off = FitOptions {
        n_harmonics: 8,
        omega: Some(true_omega * 1.01),
        ..FitOptions::default()
    };
    let plain = fit_with(&d, &off).unwrap();
    let scanned = fit_with(
        &d,
        &FitOptions {
            omega_scan: true,
            ..off
        },
    )
    .unwrap();
    assert!(
        (scanned.omega / true_omega - 1.0).abs() < 1e-6,
        "{}",
        scanned.omega / true_omega
    );
    assert!(scanned.chi2 < plain.chi2);
}

#[test]
fn sine_modes_vanish_for_a_maximal_start() {
    let d = synthesize_dataset(&spec(0.7, 100, 3.0, 0.0, 0)).unwrap();
    let fit = fit_with(
        &d,
        &FitOptions {
            n_harmonics: 4,
            sine_modes: true,
            ..FitOptions::default()
        },
    )
    .unwrap();
    for (m, p) in fit.modes.iter().zip(&fit.params) {
        if let Mode::Sin(_) = m {
            assert!(p.abs() < 1e-6, "{m:?} {p}");
        }
    }
}

#[test]
fn all_ratios_unreliable_gives_diagnostic() {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
    let points = (0..12)
        .map(|i| AsymmetryPoint {
            t: i as f64 * 0.5,
            delta: 1e-3 * normal.sample(&mut rng),
            sigma: 1.0,
        })
        .collect();
    let d = AsymmetryDataset::new(points, "flat", Some(0.4)).unwrap();
    let ex = estimate_r(&fit_fourier_modes(&d, 2).unwrap(), None).unwrap();
    assert!(ex.weighted_r.is_none());
    assert!(ex.diagnostic.is_some());
}

fn reference_ratio(ratio: f64, err: f64) -> AnharmonicityEstimate {
    AnharmonicityEstimate {
        kind: SeriesKind::Even,
        order: 1,
        ratio,
        ratio_err: err,
        r_hat: f64::NAN,
        r_err: f64::NAN,
        reliable: true,
    }
}

#[test]
fn first_ratio_with_shrunken_orbit() {
    // A reduced amplitude near 0.63 is needed to land on r = 0.13 ± 0.06.
    let (r_tilde, e_tilde) = r_from_anharmonicity(&reference_ratio(0.04, 0.02));
    let r = correct_effective_r(r_tilde, 0.63).unwrap();
    let slope = (correct_effective_r(r_tilde + 1e-7, 0.63).unwrap() - r) / 1e-7;
    assert!((r - 0.13).abs() < 0.005, "{r}");
    assert!(
        (slope * e_tilde - 0.06).abs() < 0.005,
        "{}",
        slope * e_tilde
    );
}

#[test]
fn per_dataset_estimates_average_to_combined_value() {
    let estimates = [
        (0.2, 0.6),
        (0.13, 0.06),
        (0.03, 0.06),
        (0.05, 0.06),
        (0.3, 0.3),
        (0.06, 0.05),
        (0.2, 0.4),
        (0.05, 0.06),
    ];
    let (r, e) = weighted_average(&estimates).unwrap();
    assert!((r - 0.07).abs() < 0.005, "{r}");
    assert!((e - 0.03).abs() < 0.005, "{e}");
}
