use oscint::amplitude::AmplitudeSpec;
use oscint::field::{EvalOptions, InputFunction, PacketTerm, Region};
use oscint::kbroad::{ball_family, bl_norm, bl_norm_over, mu_ball, synthetic, CapField, KBroadConfig, Search};
use oscint::phase::PhaseSpec;
use proptest::prelude::*;

fn field() -> impl Strategy<Value = CapField> {
    (1usize..=6)
        .prop_flat_map(|caps| (prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 3), caps), prop::collection::vec(0.1..2.0f64, caps)))
        .prop_filter("directions must be nonzero", |(d, _)| d.iter().all(|v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3))
        .prop_map(|(d, a)| synthetic(3, 4.0, d, a))
}

fn config(a: usize, seed: u64) -> KBroadConfig {
    let mut c = KBroadConfig::new(3, 2, a, 2.0, 4.0, 300, seed).unwrap();
    c.search = Some(Search::Exhaustive);
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn removing_a_cap_never_increases_mu(cf in field(), a in 1usize..=2, seed in 0u64..100, pick in 0usize..6) {
        let cfg = config(a, seed);
        let cap = pick % cf.caps.len();
        let before = mu_ball(&cf, 0, &cfg).mu;
        let after = mu_ball(&cf.without_cap(cap), 0, &cfg).mu;
        prop_assert!(after <= before, "{} > {}", after, before);
    }

    #[test]
    fn mu_is_non_increasing_in_a(cf in field(), seed in 0u64..100) {
        let cfg = config(1, seed);
        let mut last = f64::INFINITY;
        for a in 1..=3 {
            let m = mu_ball(&cf, 0, &cfg.with_a(a)).mu;
            prop_assert!(m <= last);
            last = m;
        }
    }

    #[test]
    fn relaxing_the_threshold_never_increases_mu(cf in field(), a in 1usize..=2, seed in 0u64..100) {
        let cfg = config(a, seed);
        let mut last = f64::INFINITY;
        for s in [0.5, 1.0, 2.0, 4.0] {
            let c = KBroadConfig { threshold: s * cfg.threshold, ..cfg.clone() };
            let m = mu_ball(&cf, 0, &c).mu;
            prop_assert!(m <= last);
            last = m;
        }
    }
}

fn small_field(terms: Vec<PacketTerm>) -> CapField {
    let phase = PhaseSpec::paraboloid(3);
    let amp = AmplitudeSpec::constant_one(1.0);
    let balls = ball_family(3, -16.0, 16.0, 4.0, 2).unwrap();
    CapField::from_operator(&phase, &amp, 32.0, &InputFunction::Packets { dim: 2, terms }, 4.0, balls, &EvalOptions::default()).unwrap()
}

fn ball_region() -> impl Strategy<Value = Region> {
    (prop::collection::vec(-12.0..12.0f64, 3), 7.0..20.0f64).prop_map(|(center, radius)| Region::Ball { center, radius })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn bl_power_is_sub_additive_over_regions(
        centers in prop::collection::vec(prop::collection::vec(-0.6..0.6f64, 2), 1..4),
        u1 in ball_region(),
        u2 in ball_region(),
        seed in 0u64..100,
    ) {
        let terms = centers.into_iter().map(|c| PacketTerm { center: c, v: vec![3.0, -2.0], radius: 0.1, sign: 1 }).collect();
        let cf = small_field(terms);
        let cfg = KBroadConfig::new(3, 2, 1, 2.0, 4.0, 200, seed).unwrap();
        let both = bl_norm_over(&cf, Some(&[u1.clone(), u2.clone()]), &cfg).unwrap().power_sum();
        let s1 = bl_norm(&cf, Some(&u1), &cfg).unwrap().power_sum();
        let s2 = bl_norm(&cf, Some(&u2), &cfg).unwrap().power_sum();
        prop_assert!(both <= (s1 + s2) * (1.0 + 1e-12), "{} > {} + {}", both, s1, s2);
    }
}
