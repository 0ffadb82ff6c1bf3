//! One line per acceptance criterion, with measured values and runtimes.

use std::time::Instant;

use num_bigint::BigInt;
use num_rational::BigRational;
use oscint::amplitude::AmplitudeSpec;
use oscint::experiments::{kakeya_compression, mass_concentration, transverse_equidistribution, KakeyaConfig, MassConfig, TransverseConfig};
use oscint::exponents::{bct_exponent, broad_to_linear, figure1, figure2, pbar_fn, Mode};
use oscint::field::{hormander_ratio, FastMode, nonstationary_decay, EvalOptions, InputFunction, OscIntegral1d, PacketTerm, Region};
use oscint::kbroad::{ball_family, bl_norm, bl_norm_over, check_logconvexity, check_triangle, mu_ball, synthetic, CapField, KBroadConfig, Search};
use oscint::phase::PhaseSpec;
use oscint::poly::Poly;
use oscint::variety::{partition, tube_cell_incidence, PolyCurve};
use oscint::wavepacket::{concentration_profile, decompose, Tube};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
    csv: String,
}

fn ratio(a: i64, b: i64) -> BigRational {
    BigRational::new(BigInt::from(a), BigInt::from(b))
}

fn exponent_tables() -> Outcome {
    let mut ok = true;
    let mut csv = String::new();
    let f1 = figure1(50).unwrap();
    let f2 = figure2(50).unwrap();
    for (a, b) in f1.iter().zip(&f2) {
        let n = a.n as i64;
        let (h2, h2p, m) = if n % 2 == 1 {
            (ratio(2 * (n + 1), n - 1), ratio(2 * (3 * n + 1), 3 * n - 3), (n + 1) / 2)
        } else {
            (ratio(2 * (n + 2), n), ratio(2 * (3 * n + 2), 3 * n - 2), n / 2 + 1)
        };
        ok &= a.h2.value == h2 && a.h2plus.value == h2p;
        ok &= b.h2_m as i64 == m && b.h2plus_m as i64 == m && b.h2_sigma == ratio(0, 1) && b.h2plus_sigma == ratio(1, 2);
        ok &= b.h2_p.value == h2 && b.h2plus_p.value == h2p;
        let pd = broad_to_linear(a.n, &pbar_fn(a.n), Mode::PositiveDefinite).unwrap();
        let gen = broad_to_linear(a.n, &bct_exponent, Mode::General).unwrap();
        ok &= pd.p_linear() == Some(&h2p) && gen.p_linear() == Some(&h2);
        csv.push_str(&format!("{},{},{}\n", n, a.h2, a.h2plus));
    }
    Outcome { pass: ok, detail: format!("{} rows compared exactly", f1.len()), csv }
}

fn wave_packets() -> Outcome {
    let (r, lambda) = (256.0, 256.0);
    let f = InputFunction::bump(vec![0.0], 0.5);
    let d = decompose(&f, r, 0.1, lambda).unwrap();
    let phase = PhaseSpec::paraboloid(2);
    let amp = AmplitudeSpec::constant_one(1.0);
    let p = &d.packets[d.dominant().unwrap()];
    let tube = Tube::new(&phase, p, lambda, 65).unwrap();
    let dd = 8.0 * tube.radius;
    let mut ext = Vec::new();
    for i in 0..=64 {
        let t = -r + 2.0 * r * i as f64 / 64.0;
        let g = p.v[0] - t * p.omega_theta[0];
        for s in [-1.0, 1.0] {
            for k in 0..4 {
                let x = vec![g + s * (dd + 4.0 * k as f64), t];
                if (x[0] * x[0] + x[1] * x[1]).sqrt() <= r {
                    ext.push(x);
                }
            }
        }
    }
    let conc = concentration_profile(&phase, &amp, lambda, p, &tube, &ext).unwrap();
    let rel = d.residual / d.f_norm;
    let pass = rel <= 1e-6 && (0.125..=8.0).contains(&d.orthogonality_defect) && conc <= 1e-3 && !ext.is_empty();
    Outcome {
        pass,
        detail: format!("residual/‖f‖={:.2e} orthogonality={:.3} concentration={:.2e} ({} exterior points)", rel, d.orthogonality_defect, conc, ext.len()),
        csv: format!("{:e},{:e},{:e},{}\n", d.residual, d.orthogonality_defect, conc, d.packets.len()),
    }
}

fn random_packets(rng: &mut ChaCha8Rng, dim: usize, terms: usize, v_max: f64) -> InputFunction {
    let terms = (0..terms)
        .map(|_| PacketTerm {
            center: (0..dim).map(|_| rng.random::<f64>() - 0.5).collect(),
            v: (0..dim).map(|_| (2.0 * rng.random::<f64>() - 1.0) * v_max).collect(),
            radius: 0.05 + 0.15 * rng.random::<f64>(),
            sign: if rng.random::<bool>() { 1 } else { -1 },
        })
        .collect();
    InputFunction::Packets { dim, terms }
}

fn hormander() -> Outcome {
    let phase = PhaseSpec::paraboloid(2);
    let amp = AmplitudeSpec::constant_one(1.0);
    let mut worst: f64 = 0.0;
    let mut csv = String::new();
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_packets(&mut rng, 1, 6, 64.0);
        for (r, v) in hormander_ratio(&phase, &amp, 256.0, &f, &[16.0, 64.0, 256.0], &EvalOptions { spacing: None, fast: FastMode::On }).unwrap() {
            worst = worst.max(v);
            csv.push_str(&format!("{},{},{:e}\n", seed, r, v));
        }
    }
    Outcome { pass: worst <= 10.0, detail: format!("max ratio {:.3}", worst), csv }
}

fn mass() -> Outcome {
    let r = mass_concentration(&MassConfig::default()).unwrap();
    let s = r.slope().unwrap_or(f64::NAN);
    Outcome { pass: (s + 0.5).abs() <= 0.1, detail: format!("exponent {:.4}", s), csv: r.to_csv() }
}

fn kakeya() -> Outcome {
    let r = kakeya_compression(&KakeyaConfig::default()).unwrap();
    let s = r.slope().unwrap_or(f64::NAN);
    let worst = r.measurements.iter().map(|m| m.extra["max_abs_p_over_lambda_sq"]).fold(0.0, f64::max);
    Outcome { pass: worst <= 1e-6 && (s - 2.5).abs() <= 0.2, detail: format!("max |P|/λ²={:.1e} volume exponent {:.4}", worst, s), csv: r.to_csv() }
}

fn transverse() -> Outcome {
    let r = transverse_equidistribution(&TransverseConfig::default()).unwrap();
    let s = r.slope().unwrap_or(f64::NAN);
    Outcome { pass: s >= 0.3, detail: format!("ρ-exponent {:.4}", s), csv: r.to_csv() }
}

fn partitioning() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pts: Vec<Vec<f64>> = (0..10_000).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
    let w = vec![1.0; pts.len()];
    let mut pass = true;
    let mut detail = Vec::new();
    let mut csv = String::new();
    for d in [2u32, 4, 8] {
        let p = partition(&pts, &w, d).unwrap();
        let mut lines = 0;
        for _ in 0..1000 {
            let th: f64 = rng.random::<f64>() * std::f64::consts::PI;
            let c = [rng.random::<f64>(), rng.random::<f64>()];
            lines = lines.max(tube_cell_incidence(&PolyCurve::line(&c, &[th.cos(), th.sin()], (-1.5, 1.5)), &p));
        }
        let mut quintics = 0;
        for _ in 0..100 {
            let coeffs: Vec<Vec<f64>> = (0..6)
                .map(|k| {
                    let s = if k == 0 { 1.0 } else { 2.0 / k as f64 };
                    let off = if k == 0 { 0.0 } else { s / 2.0 };
                    vec![s * rng.random::<f64>() - off, s * rng.random::<f64>() - off]
                })
                .collect();
            quintics = quintics.max(tube_cell_incidence(&PolyCurve { coeffs, interval: (-1.0, 1.0), error_bound: 0.0 }, &p));
        }
        let deg = p.degree as usize;
        let ok = p.nonempty_ratio() <= 16.0 && lines <= deg + 1 && quintics <= 5 * deg + 1;
        pass &= ok;
        detail.push(format!("D={} deg={} ratio={:.2} lines≤{} quintics≤{}", d, deg, p.nonempty_ratio(), lines, quintics));
        csv.push_str(&p.to_csv());
    }
    Outcome { pass, detail: detail.join("; "), csv }
}

fn multi_cap(rng: &mut ChaCha8Rng, k: f64, lambda: f64, caps: usize) -> InputFunction {
    let terms = (0..caps)
        .map(|_| {
            let c = loop {
                let c = [((2.0 * rng.random::<f64>() - 1.0) * k * 0.6).round() / k, ((2.0 * rng.random::<f64>() - 1.0) * k * 0.6).round() / k];
                if (c[0] * c[0] + c[1] * c[1]).sqrt() < 0.6 {
                    break c;
                }
            };
            PacketTerm {
                center: c.to_vec(),
                v: vec![(rng.random::<f64>() - 0.5) * lambda / 4.0, (rng.random::<f64>() - 0.5) * lambda / 4.0],
                radius: 0.4 / k,
                sign: if rng.random::<bool>() { 1 } else { -1 },
            }
        })
        .collect();
    InputFunction::Packets { dim: 2, terms }
}

fn kbroad() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut gap: f64 = 0.0;
    for i in 0..100 {
        let nc = 1 + i % 3;
        let dirs: Vec<Vec<f64>> = (0..nc).map(|_| (0..3).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect()).collect();
        let amps: Vec<f64> = (0..nc).map(|_| rng.random::<f64>() + 0.1).collect();
        let cf = synthetic(3, 4.0, dirs, amps);
        let mut cfg = KBroadConfig::new(3, 2, 1 + i % 2, 2.0, 4.0, 5000, i as u64).unwrap();
        cfg.search = Some(Search::Exhaustive);
        let ex = mu_ball(&cf, 0, &cfg).mu;
        cfg.search = Some(Search::Greedy);
        let gr = mu_ball(&cf, 0, &cfg).mu;
        gap = gap.max(if ex == 0.0 { if gr == 0.0 { 0.0 } else { f64::INFINITY } } else { (gr - ex).abs() / ex });
    }
    let phase = PhaseSpec::paraboloid(3);
    let amp = AmplitudeSpec::constant_one(1.0);
    let (lambda, k) = (128.0, 8.0);
    let balls = ball_family(3, -64.0, 64.0, k, 3).unwrap();
    let opts = EvalOptions::default();
    let (mut ct, mut cl): (f64, f64) = (0.0, 0.0);
    let mut sub_ok = true;
    let mut csv = String::new();
    for i in 0..50 {
        let field = |rng: &mut ChaCha8Rng, caps| CapField::from_operator(&phase, &amp, lambda, &multi_cap(rng, k, lambda, caps), k, balls.clone(), &opts).unwrap();
        let f1 = field(&mut rng, 2);
        let f2 = field(&mut rng, 2);
        let f5 = field(&mut rng, 5);
        let cfg = KBroadConfig::new(3, 2, 2, 2.0, k, 2000, i).unwrap();
        ct = ct.max(check_triangle(&f1, &f2, &cfg, 1, 1).unwrap().constant);
        cl = cl.max(check_logconvexity(&f5, &cfg.with_p(4.0), 4.0, 2.0, 64.0, 15.0 / 31.0, 16.0 / 31.0, 1, 1).unwrap().constant);
        let u1 = Region::Ball { center: vec![-20.0, 0.0, 0.0], radius: 40.0 };
        let u2 = Region::Ball { center: vec![25.0, 10.0, 0.0], radius: 40.0 };
        let both = bl_norm_over(&f5, Some(&[u1.clone(), u2.clone()]), &cfg).unwrap().power_sum();
        let s1 = bl_norm(&f5, Some(&u1), &cfg).unwrap().power_sum();
        let s2 = bl_norm(&f5, Some(&u2), &cfg).unwrap().power_sum();
        sub_ok &= both <= s1 + s2;
        csv.push_str(&format!("{:e},{:e},{:e}\n", both, s1, s2));
    }
    let pass = gap <= 0.05 && ct <= 8.0 && cl <= 8.0 && sub_ok;
    Outcome { pass, detail: format!("greedy gap {:.3} triangle C={:.3} log-convexity C={:.3} sub-additive={}", gap, ct, cl, sub_ok), csv }
}

fn decay() -> Outcome {
    let spec = OscIntegral1d { psi: Poly::var(1, 0), center: 0.0, radius: 0.5, zero_amplitude: false };
    let lambdas: Vec<f64> = (4..=10).map(|k| 2f64.powi(k)).collect();
    let r = nonstationary_decay(&spec, &lambdas, 3).unwrap();
    let s = r.fit.as_ref().map(|f| f.slope).unwrap_or(f64::NAN);
    let csv = r.magnitudes.iter().map(|m| format!("{:e}\n", m)).collect();
    Outcome { pass: s <= -2.7, detail: format!("slope {:.3}", s), csv }
}

type Criterion = (usize, &'static str, f64, fn() -> Outcome);

const CRITERIA: [Criterion; 9] = [
    (1, "exponent tables", 1.0, exponent_tables),
    (2, "wave packets", 120.0, wave_packets),
    (3, "hormander L2", 120.0, hormander),
    (4, "mass concentration", 600.0, mass),
    (5, "kakeya compression", 600.0, kakeya),
    (6, "transverse equidistribution", 600.0, transverse),
    (7, "partitioning", 120.0, partitioning),
    (8, "k-broad structure", 300.0, kbroad),
    (9, "non-stationary decay", 30.0, decay),
];

/// `OSCINT_ACCEPTANCE=2,5` restricts the run to the listed criteria.
fn selected() -> Vec<Criterion> {
    let only: Option<Vec<usize>> = std::env::var("OSCINT_ACCEPTANCE").ok().map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    CRITERIA.into_iter().filter(|c| only.as_ref().is_none_or(|o| o.contains(&c.0))).collect()
}

#[test]
fn acceptance() {
    let mut all = true;
    let mut outputs = Vec::new();
    let criteria = selected();
    for &(id, name, limit, run) in &criteria {
        let t = Instant::now();
        let o = run();
        let secs = t.elapsed().as_secs_f64();
        let pass = o.pass && secs < limit;
        all &= pass;
        println!("criterion {:>2} {:<28} {}  {} [{:.2}s / {}s]", id, name, if pass { "PASS" } else { "FAIL" }, o.detail, secs, limit);
        outputs.push(o.csv);
    }
    let mut same = true;
    for ((_, _, _, run), first) in criteria.iter().zip(&outputs) {
        same &= run().csv == *first;
    }
    all &= same;
    println!("criterion 10 {:<28} {}  {} criteria rerun with identical seeds", "determinism", if same { "PASS" } else { "FAIL" }, criteria.len());
    assert!(all, "at least one acceptance criterion failed");
}
