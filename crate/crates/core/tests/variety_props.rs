use oscint::experiments::sharp_example_phase;
use oscint::phase::{bourgain_block, kakeya_block, PhaseSpec};
use oscint::poly::Poly;
use oscint::variety::{partition, real_intersections, tangency_classify, taylor_curve, CoreCurveSource, TangencyParams, Variety};
use oscint::wavepacket::{PacketScale, Tube, WavePacket};
use proptest::prelude::*;

fn random_poly(degree: u32, coeffs: &[f64]) -> Poly {
    let mut p = Poly::zero(2);
    let mut k = 0;
    for a in 0..=degree {
        for b in 0..=degree - a {
            p = &p + &Poly::monomial(2, vec![a, b], coeffs[k % coeffs.len()]);
            k += 1;
        }
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn bezout_bound_for_plane_curves(d1 in 1u32..=4, d2 in 1u32..=4, c1 in prop::collection::vec(-1.0..1.0f64, 15), c2 in prop::collection::vec(-1.0..1.0f64, 15)) {
        let p = random_poly(d1, &c1);
        let q = random_poly(d2, &c2);
        let roots = real_intersections(&p, &q, [-2.0, -2.0], [2.0, 2.0], 200);
        prop_assert!(roots.len() as u32 <= d1 * d2, "{} roots for degrees {} and {}", roots.len(), d1, d2);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn partition_conserves_weight_and_separates_points(
        pts in prop::collection::vec(prop::collection::vec(0.0..1.0f64, 2), 200..600),
        seed_w in prop::collection::vec(0.1..2.0f64, 600),
        d in 2u32..=4,
    ) {
        let w = &seed_w[..pts.len()];
        let p = partition(&pts, w, d).unwrap();
        let cells: f64 = p.cells.iter().map(|c| c.weight).sum();
        prop_assert!((cells + p.wall_weight - p.total_weight).abs() <= 1e-9 * p.total_weight);
        prop_assert!((p.total_weight - w.iter().sum::<f64>()).abs() <= 1e-9 * p.total_weight);
        let mut counts = vec![0usize; p.cells.len()];
        let mut weights = vec![0.0; p.cells.len()];
        for (i, c) in p.point_cells.iter().enumerate() {
            prop_assert_eq!(*c, p.cell_of(&pts[i]));
            if let Some(c) = c {
                counts[*c] += 1;
                weights[*c] += w[i];
            }
        }
        for (k, cell) in p.cells.iter().enumerate() {
            prop_assert_eq!(counts[k], cell.points);
            prop_assert!((weights[k] - cell.weight).abs() <= 1e-9 * p.total_weight);
        }
    }

    #[test]
    fn taylor_error_scales_like_root_lambda(w in prop::collection::vec(-0.4..0.4f64, 2), v in prop::collection::vec(-8.0..8.0f64, 2), bourgain in any::<bool>()) {
        let block = if bourgain { bourgain_block() } else { kakeya_block() };
        let phase = sharp_example_phase(3, block).unwrap();
        let eps = 0.25;
        for lambda in [64.0, 256.0f64] {
            let src = CoreCurveSource { phase: &phase, omega: w.clone(), v: v.clone(), lambda };
            let rep = taylor_curve(&src, eps, lambda).unwrap();
            let c = rep.curve.error_bound / lambda.powf(0.5 - eps);
            prop_assert!(c <= 10.0, "constant {} at λ = {}", c, lambda);
        }
    }

    #[test]
    fn tangency_is_monotone_in_delta_m(w in prop::collection::vec(-0.1..0.1f64, 2), v in prop::collection::vec(-12.0..12.0f64, 2)) {
        let phase = PhaseSpec::paraboloid(3);
        let (r, lambda) = (256.0, 256.0);
        let scale = PacketScale::new(2, r, 0.05, 1.0 / (2.5 * lambda)).unwrap();
        let theta = scale.nearest_cap(&w);
        let packet = WavePacket {
            omega_theta: scale.cap_center(&theta),
            theta,
            v_index: Vec::new(),
            v,
            r,
            delta: 0.05,
            spacing: scale.spacing,
            indices: Vec::new(),
            values: Vec::new(),
        };
        let tube = Tube::new(&phase, &packet, lambda, 33).unwrap();
        let z = Variety::unchecked(vec![Poly::var(3, 0)], 3);
        let mut was_tangent = false;
        for dm in [0.05, 0.1, 0.2, 0.3, 0.4] {
            let t = tangency_classify(&phase, &tube, &z, r, dm, TangencyParams::default()).unwrap().tangent;
            prop_assert!(!was_tangent || t, "tangent flipped to transverse at δ_m = {}", dm);
            was_tangent = t;
        }
    }
}
