use oscint::experiments::sharp_example_phase;
use oscint::field::InputFunction;
use oscint::numerics::norm;
use oscint::phase::{bourgain_block, kakeya_block, PhaseSpec};
use oscint::poly::Poly;
use oscint::wavepacket::{core_curve, curve_tangent, decompose, tangent_alignment};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn reduced_test_phase(eps: f64) -> PhaseSpec {
    let h = Poly::parse("0.5*w1^2 + 0.5*w2^2", &["w1", "w2"], &[]).unwrap();
    let e = Poly::parse("c*x1*x3*w1*w2 + c*x2^2*w1^2", &["x1", "x2", "x3", "w1", "w2"], &[("c", eps)]).unwrap();
    PhaseSpec::reduced(3, h, e, 1.0, 1.0).unwrap()
}

fn polynomial_phases() -> Vec<PhaseSpec> {
    vec![
        PhaseSpec::paraboloid(3),
        PhaseSpec::hyperbolic(),
        reduced_test_phase(0.05),
        sharp_example_phase(3, kakeya_block()).unwrap(),
        sharp_example_phase(3, bourgain_block()).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn packets_reconstruct_smooth_inputs(c in -0.3..0.3f64, radius in 0.2..0.5f64, big in any::<bool>()) {
        let r = if big { 256.0 } else { 64.0 };
        let d = decompose(&InputFunction::bump(vec![c], radius), r, 0.1, r).unwrap();
        prop_assert!(d.residual <= 1e-6 * d.f_norm, "residual {:e}", d.residual);
    }

    #[test]
    fn subfamilies_are_almost_orthogonal(c in -0.3..0.3f64, radius in 0.2..0.5f64, seed in 0u64..10_000) {
        let d = decompose(&InputFunction::bump(vec![c], radius), 64.0, 0.1, 64.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let subset: Vec<usize> = (0..d.packets.len()).filter(|_| rng.random::<bool>()).collect();
            if subset.is_empty() {
                continue;
            }
            let q = d.subfamily_ratio(&subset);
            prop_assert!((0.125..=8.0).contains(&q), "ratio {}", q);
        }
    }

    #[test]
    fn core_curves_follow_the_gauss_map(w in prop::collection::vec(-0.4..0.4f64, 2), v in prop::collection::vec(-16.0..16.0f64, 2)) {
        let lambda = 64.0;
        let ts: Vec<f64> = (0..=32).map(|i| -16.0 + i as f64).collect();
        for p in polynomial_phases() {
            let c = core_curve(&p, &w, &v, lambda, &ts).unwrap();
            let a = tangent_alignment(&p, &w, &c, lambda).unwrap();
            prop_assert!(a <= 1e-4, "angle {:e}", a);
        }
    }

    #[test]
    fn core_curves_have_unit_speed_up_to_constants(w in prop::collection::vec(-0.4..0.4f64, 2), v in prop::collection::vec(-16.0..16.0f64, 2), eps in 0.0..0.08f64) {
        let lambda = 64.0;
        let ts: Vec<f64> = (0..=32).map(|i| -16.0 + i as f64).collect();
        for p in [PhaseSpec::paraboloid(3), reduced_test_phase(eps)] {
            let c = core_curve(&p, &w, &v, lambda, &ts).unwrap();
            for (t, g) in c.t.iter().zip(&c.gamma) {
                let Some(g) = g else { continue };
                let s = norm(&curve_tangent(&p, &w, g, *t, lambda).unwrap());
                prop_assert!((0.5..=2.0).contains(&s), "|Γ'| = {}", s);
            }
        }
    }
}
