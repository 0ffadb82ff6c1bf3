use oscint::amplitude::AmplitudeSpec;
use oscint::experiments::{
    kakeya_compression, mass_concentration, mass_contrast, mass_q, run_named, scaling_sweep, sharp_example_phase, transverse_equidistribution, KakeyaConfig,
    MassConfig, SweepConfig, TransverseConfig,
};
use oscint::field::InputFunction;
use oscint::phase::bourgain_block;

fn small_kakeya() -> KakeyaConfig {
    KakeyaConfig { lambdas: vec![64.0, 128.0, 256.0], volume_samples: 4000, ..KakeyaConfig::default() }
}

fn small_transverse() -> TransverseConfig {
    TransverseConfig { r: 64.0, lambda: 64.0, rhos: vec![12.0, 24.0, 48.0], ..TransverseConfig::default() }
}

#[test]
fn identical_seeds_give_identical_reports() {
    let a = serde_json::to_string(&kakeya_compression(&small_kakeya()).unwrap()).unwrap();
    let b = serde_json::to_string(&kakeya_compression(&small_kakeya()).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn fits_use_at_least_three_points_and_keep_residuals() {
    let r = kakeya_compression(&small_kakeya()).unwrap();
    let fit = r.fit.as_ref().unwrap();
    assert!(r.measurements.len() >= 3);
    assert_eq!(fit.residuals.len(), r.measurements.len());
}

#[test]
fn emitted_configs_rerun_identically() {
    let cfg = serde_json::to_value(small_kakeya()).unwrap();
    let a = run_named("kakeya-compression", cfg.clone()).unwrap();
    let b = kakeya_compression(&serde_json::from_value(cfg).unwrap()).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
}

#[test]
fn short_lambda_lists_are_rejected() {
    let cfg = MassConfig { lambdas: vec![64.0, 128.0], ..MassConfig::default() };
    assert!(mass_concentration(&cfg).is_err());
}

#[test]
fn planar_mass_concentration_exponent() {
    let r = mass_concentration(&MassConfig { n: 2, ..MassConfig::default() }).unwrap();
    let s = r.slope().unwrap();
    assert!((s + 0.5).abs() <= 0.1, "exponent {}", s);
}

#[test]
fn field_is_small_away_from_the_variety() {
    let (on, off) = mass_contrast(3, 256.0, 64.0, 400, 3).unwrap();
    assert!(off <= on / 10.0, "off-variety median {} vs {}", off, on);
}

#[test]
fn whole_space_has_flat_transverse_profile() {
    let r = transverse_equidistribution(&TransverseConfig { hyperplane: false, ..small_transverse() }).unwrap();
    let s = r.slope().unwrap();
    assert!(s.abs() <= 0.1, "exponent {}", s);
}

#[test]
fn single_packet_profile_is_monotone() {
    let r = transverse_equidistribution(&TransverseConfig { packets: Some(1), ..small_transverse() }).unwrap();
    assert_eq!(r.measurements[0].extra["tangent_packets"], 1.0);
    for w in r.measurements.windows(2) {
        assert!(w[1].value >= w[0].value);
    }
}

#[test]
fn global_l2_norm_grows_like_root_lambda() {
    let cfg = SweepConfig {
        phase: sharp_example_phase(3, bourgain_block()).unwrap(),
        amplitude: AmplitudeSpec::constant_one(1.0),
        input: InputFunction::ModulatedBump { q: Some(mass_q(2)), lambda_mod: 0.0, center: vec![0.0; 2], radius: 0.9 },
        modulate_with_lambda: true,
        p: 2.0,
        region_factor: 0.25,
        samples: 8000,
        lambdas: vec![32.0, 64.0, 128.0, 256.0],
        seed: 5,
        expected: Some(0.5),
        tolerance: Some(0.1),
    };
    let s = scaling_sweep(&cfg).unwrap().slope().unwrap();
    assert!((s - 0.5).abs() <= 0.1, "exponent {}", s);
}
