use cuq::bloch::{
    bloch_derivative, density_evolution_rhs, density_from_bloch, pauli_components, purity_rate,
    BlochState, QubitModel,
};
use cuq::Vec3;
use proptest::prelude::*;

fn direction() -> impl Strategy<Value = Vec3> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_map(|(x, y, z)| Vec3::new(x, y, z))
        .prop_filter("non-degenerate", |v| v.norm() > 0.1)
}

fn ball_point() -> impl Strategy<Value = Vec3> {
    (direction(), 0.0..=1.0f64).prop_map(|(v, s)| v.normalize() * s)
}

fn model() -> impl Strategy<Value = QubitModel> {
    (direction(), direction(), 0.01..5.0f64, 0.001..20.0f64)
        .prop_map(|(e, g, r, m)| QubitModel::new(e, g, r, m).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn density_form_equals_bloch_form(b in ball_point(), m in model(), e0 in -5.0..5.0f64, g0 in 0.0..5.0f64) {
        let m = m.with_trace_parts(e0, g0);
        let state = BlochState::new(b, 0.0).unwrap();
        let rho = density_from_bloch(&state).unwrap();
        let rhs = density_evolution_rhs(&rho, &m);
        let (trace, comps) = pauli_components(&rhs);
        let db = bloch_derivative(&state, &m);
        let scale = m.gamma_mag();
        prop_assert!(trace.norm() < 1e-12 * scale.max(1.0));
        for k in 0..3 {
            prop_assert!((comps[k].re / scale - db[k]).abs() < 1e-12 * (1.0 + db.norm()));
            prop_assert!(comps[k].im.abs() < 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn trace_parts_do_not_matter(b in ball_point(), m in model(), e0 in -5.0..5.0f64, g0 in 0.0..5.0f64) {
        let state = BlochState::new(b, 0.0).unwrap();
        let rho = density_from_bloch(&state).unwrap();
        let plain = density_evolution_rhs(&rho, &m);
        let shifted = density_evolution_rhs(&rho, &m.with_trace_parts(e0, g0));
        prop_assert!((plain - shifted).norm() < 1e-12 * (1.0 + e0.abs() + g0.abs()) * m.gamma_mag().max(1.0));
    }

    #[test]
    fn radial_component_matches_purity_rate(b in ball_point(), m in model()) {
        let state = BlochState::new(b, 0.0).unwrap();
        let db = bloch_derivative(&state, &m);
        let radial = b.dot(&db);
        prop_assert!((radial - 0.5 * purity_rate(&state, &m)).abs() < 1e-12);
        prop_assert!((radial - m.gamma().dot(&b) * (1.0 - b.norm_squared())).abs() < 1e-12);
    }

    #[test]
    fn pure_states_stay_on_the_sphere(b in direction(), m in model()) {
        let state = BlochState::new(b.normalize(), 0.0).unwrap();
        prop_assert!(purity_rate(&state, &m).abs() < 1e-12);
        let rho = density_from_bloch(&state).unwrap();
        prop_assert!(rho.is_pure(1e-12));
    }
}

#[test]
fn twenty_fixed_draws() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let unit = |rng: &mut rand_chacha::ChaCha8Rng| loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if v.norm() > 0.1 && v.norm() <= 1.0 {
            return v;
        }
    };
    for _ in 0..20 {
        let b = unit(&mut rng);
        let m = QubitModel::new(
            unit(&mut rng),
            unit(&mut rng),
            rng.random_range(0.05..3.0),
            1.0,
        )
        .unwrap();
        let state = BlochState::new(b, 0.0).unwrap();
        let rhs = density_evolution_rhs(&density_from_bloch(&state).unwrap(), &m);
        let (_, comps) = pauli_components(&rhs);
        let db = bloch_derivative(&state, &m);
        for k in 0..3 {
            assert!((comps[k].re / m.gamma_mag() - db[k]).abs() < 1e-12);
        }
    }
}
