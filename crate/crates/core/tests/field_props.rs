use oscint::amplitude::AmplitudeSpec;
use oscint::field::{evaluate, locally_constant_defect, required_spacing, EvalOptions, FastMode, InputFunction, PacketTerm};
use oscint::phase::PhaseSpec;
use proptest::prelude::*;

fn term() -> impl Strategy<Value = PacketTerm> {
    (prop::collection::vec(-0.5..0.5f64, 2), prop::collection::vec(-20.0..20.0f64, 2), 0.1..0.3f64, any::<bool>())
        .prop_map(|(center, v, radius, s)| PacketTerm { center, v, radius, sign: if s { 1 } else { -1 } })
}

fn points(count: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-30.0..30.0f64, 3), count)
}

fn fixed(spacing: f64) -> EvalOptions {
    EvalOptions { spacing: Some(spacing), fast: FastMode::Off }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn evaluation_is_deterministic(terms in prop::collection::vec(term(), 1..4), pts in points(8)) {
        let phase = PhaseSpec::paraboloid(3);
        let amp = AmplitudeSpec::constant_one(1.0);
        let f = InputFunction::Packets { dim: 2, terms };
        let a = evaluate(&phase, &amp, 64.0, &f, &pts, &EvalOptions::default()).unwrap();
        let b = evaluate(&phase, &amp, 64.0, &f, &pts, &EvalOptions::default()).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert_eq!(x.re.to_bits(), y.re.to_bits());
            prop_assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
    }

    #[test]
    fn evaluation_is_linear(t1 in prop::collection::vec(term(), 1..3), t2 in prop::collection::vec(term(), 1..3), pts in points(8)) {
        let phase = PhaseSpec::paraboloid(3);
        let amp = AmplitudeSpec::constant_one(1.0);
        let lambda = 64.0;
        let f1 = InputFunction::Packets { dim: 2, terms: t1.clone() };
        let f2 = InputFunction::Packets { dim: 2, terms: t2.clone() };
        let sum = InputFunction::Packets { dim: 2, terms: [t1, t2].concat() };
        let h = [&f1, &f2, &sum].iter().map(|f| required_spacing(&phase, &amp, lambda, f, &pts)).fold(f64::INFINITY, f64::min);
        let e1 = evaluate(&phase, &amp, lambda, &f1, &pts, &fixed(h)).unwrap();
        let e2 = evaluate(&phase, &amp, lambda, &f2, &pts, &fixed(h)).unwrap();
        let es = evaluate(&phase, &amp, lambda, &sum, &pts, &fixed(h)).unwrap();
        let scale = es.max_abs().max(e1.max_abs()).max(e2.max_abs());
        for ((a, b), s) in e1.values.iter().zip(&e2.values).zip(&es.values) {
            prop_assert!((a + b - s).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn modulation_translates_the_modulus(t in term(), u in prop::collection::vec(-10.0..10.0f64, 2), pts in points(20)) {
        let phase = PhaseSpec::paraboloid(3);
        let amp = AmplitudeSpec::constant_one(1.0);
        let lambda = 64.0;
        let f = InputFunction::Packets { dim: 2, terms: vec![t.clone()] };
        let v: Vec<f64> = t.v.iter().zip(&u).map(|(a, b)| a + b).collect();
        let g = InputFunction::Packets { dim: 2, terms: vec![PacketTerm { v, ..t }] };
        let shifted: Vec<Vec<f64>> = pts.iter().map(|x| vec![x[0] - u[0], x[1] - u[1], x[2]]).collect();
        let h = required_spacing(&phase, &amp, lambda, &g, &pts).min(required_spacing(&phase, &amp, lambda, &f, &shifted));
        let eg = evaluate(&phase, &amp, lambda, &g, &pts, &fixed(h)).unwrap();
        let ef = evaluate(&phase, &amp, lambda, &f, &shifted, &fixed(h)).unwrap();
        for (a, b) in eg.values.iter().zip(&ef.values) {
            prop_assert!((a.norm() - b.norm()).abs() <= 1e-8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn narrow_caps_give_locally_constant_fields(c in prop::collection::vec(-0.4..0.4f64, 2), rho in 4.0..16.0f64, seed in 0u64..1000) {
        let phase = PhaseSpec::paraboloid(3);
        let amp = AmplitudeSpec::constant_one(1.0);
        let f = InputFunction::bump(c, 1.0 / rho);
        let d = locally_constant_defect(&phase, &amp, 256.0, &f, &[0.0; 3], 64.0, rho, 200, seed).unwrap();
        let bernstein = std::f64::consts::TAU / 10.0;
        prop_assert!(d <= bernstein, "defect {}", d);
    }
}
