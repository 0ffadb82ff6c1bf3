use nalgebra::DMatrix;
use oscint::numerics::{dist, dot};
use oscint::phase::{op_norm, Curvature, PhaseSpec};
use oscint::poly::Poly;
use proptest::prelude::*;

const NAMES: [&str; 5] = ["x1", "x2", "x3", "w1", "w2"];

fn reduced_test_phase(eps: f64) -> PhaseSpec {
    let h = Poly::parse("0.5*w1^2 + 0.5*w2^2", &["w1", "w2"], &[]).unwrap();
    let e = Poly::parse("c*x1*x3*w1*w2 + c*x2^2*w1^2 - c*x1*x2*w2^2", &NAMES, &[("c", eps)]).unwrap();
    PhaseSpec::reduced(3, h, e, 1.0, 1.0).unwrap()
}

fn test_phases() -> Vec<PhaseSpec> {
    vec![PhaseSpec::paraboloid(3), PhaseSpec::hyperbolic(), reduced_test_phase(0.05)]
}

fn angle(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b).abs().min(1.0).acos()
}

fn vec3(r: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-r..r, 3)
}

fn vec2(r: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-r..r, 2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn gauss_map_is_bi_lipschitz_in_omega(x in vec3(0.3), w in vec2(0.4), wb in vec2(0.4)) {
        prop_assume!(dist(&w, &wb) > 1e-3);
        for p in test_phases() {
            let g = p.gauss_map(&x, &w).unwrap();
            let gb = p.gauss_map(&x, &wb).unwrap();
            let r = angle(&g, &gb) / dist(&w, &wb);
            prop_assert!((0.05..=20.0).contains(&r), "ratio {}", r);
        }
    }

    #[test]
    fn gauss_map_is_lipschitz_in_x(x in vec3(20.0), xb in vec3(20.0), w in vec2(0.4)) {
        let lambda = 64.0;
        for p in test_phases() {
            let g = p.gauss_map_lambda(&x, &w, lambda).unwrap();
            let gb = p.gauss_map_lambda(&xb, &w, lambda).unwrap();
            prop_assert!(angle(&g, &gb) <= 20.0 * dist(&x, &xb) / lambda + 1e-12);
        }
    }
}

fn hessian_h(p: &PhaseSpec, x: &[f64]) -> DMatrix<f64> {
    let s = 1e-3;
    let h = |u: [f64; 2]| p.graph_h(x, &u).unwrap();
    let mut m = DMatrix::zeros(2, 2);
    for i in 0..2 {
        for j in 0..2 {
            let mut v = 0.0;
            for (si, sj, c) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
                let mut u = [0.0; 2];
                u[i] += si * s;
                u[j] += sj * s;
                v += c * h(u);
            }
            m[(i, j)] = v / (4.0 * s * s);
        }
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graph_reparametrisation_is_close_to_the_paraboloid(x in vec3(0.3), eps in 0.0..0.08f64) {
        let p = reduced_test_phase(eps);
        prop_assert!(p.graph_h(&x, &[0.0, 0.0]).unwrap().abs() <= 1e-9);
        let s = 1e-5;
        for i in 0..2 {
            let mut up = [0.0; 2];
            let mut dn = [0.0; 2];
            up[i] = s;
            dn[i] = -s;
            let d = (p.graph_h(&x, &up).unwrap() - p.graph_h(&x, &dn).unwrap()) / (2.0 * s);
            prop_assert!(d.abs() <= 1e-6, "∂h = {}", d);
        }
        let defect = op_norm(&(hessian_h(&p, &x) - DMatrix::identity(2, 2)));
        prop_assert!(defect <= 0.2, "Hessian defect {}", defect);
    }

    #[test]
    fn curvature_classes_of_the_model_phases(x in vec3(0.5), w in vec2(0.5)) {
        let par = PhaseSpec::paraboloid(3).classify_curvature(&x, &w).unwrap();
        prop_assert_eq!(par.classification, Curvature::PositiveDefinite);
        let hyp = PhaseSpec::hyperbolic().classify_curvature(&x, &w).unwrap();
        prop_assert_eq!(hyp.classification, Curvature::Indefinite);
    }
}
