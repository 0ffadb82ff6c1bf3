//! Scaling experiments built on the sharp-example constructions.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amplitude::AmplitudeSpec;
use crate::error::{Error, Result};
use crate::field::{evaluate_on, lp_norm, EvalOptions, InputFunction, OmegaLattice, Operator, PacketTerm, PointSet, Region};
use crate::numerics::{dist, loglog_fit, norm, LinearFit};
use crate::phase::{bourgain_block, build_model_phase, kakeya_block, Block, PhaseSpec};
use crate::poly::{x_names, Poly};
use crate::variety::{tangency_classify, TangencyParams, Variety};
use crate::wavepacket::{core_curve, PacketScale, Tube, WavePacket};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    /// `λ` or `ρ`, depending on the experiment.
    pub param: f64,
    pub value: f64,
    #[serde(default)]
    pub extra: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub n: usize,
    pub seed: u64,
    pub measurements: Vec<Measurement>,
    pub fit: Option<LinearFit>,
    pub expected: Option<f64>,
    pub tolerance: Option<f64>,
    pub pass: Option<bool>,
    pub flags: Vec<String>,
}

impl ExperimentReport {
    fn new(name: &str, n: usize, seed: u64) -> Self {
        ExperimentReport { name: name.into(), n, seed, measurements: Vec::new(), fit: None, expected: None, tolerance: None, pass: None, flags: Vec::new() }
    }

    /// Fit `log value` against `log param` and compare with the expectation.
    fn finish(mut self, expected: Option<f64>, tolerance: Option<f64>) -> Self {
        self.expected = expected;
        self.tolerance = tolerance;
        let x: Vec<f64> = self.measurements.iter().map(|m| m.param).collect();
        let y: Vec<f64> = self.measurements.iter().map(|m| m.value).collect();
        if y.iter().all(|v| *v == 0.0) {
            self.flags.push("all measurements are zero; no fit".into());
            return self;
        }
        match loglog_fit(&x, &y) {
            Ok(f) => {
                if let (Some(e), Some(t)) = (expected, tolerance) {
                    self.pass = Some((f.slope - e).abs() <= t);
                }
                self.fit = Some(f);
            }
            Err(e) => self.flags.push(format!("no fit: {}", e)),
        }
        self
    }

    pub fn slope(&self) -> Option<f64> {
        self.fit.as_ref().map(|f| f.slope)
    }

    pub fn to_csv(&self) -> String {
        let keys: Vec<&String> = self.measurements.first().map(|m| m.extra.keys().collect()).unwrap_or_default();
        let mut s = String::from("param,value");
        for k in &keys {
            s.push(',');
            s.push_str(k);
        }
        s.push('\n');
        for m in &self.measurements {
            s.push_str(&format!("{:e},{:e}", m.param, m.value));
            for k in &keys {
                s.push_str(&format!(",{:e}", m.extra.get(*k).copied().unwrap_or(f64::NAN)));
            }
            s.push('\n');
        }
        s
    }
}

fn one_by_one() -> Block {
    vec![vec![Poly::var(1, 0)]]
}

/// Model phase with `⌊(n−1)/2⌋` copies of `block`, plus `(t)` when `n` is even.
pub fn sharp_example_phase(n: usize, block: Block) -> Result<PhaseSpec> {
    let mut blocks = vec![block; (n - 1) / 2];
    if n % 2 == 0 {
        blocks.push(one_by_one());
    }
    build_model_phase(&blocks, n)
}

/// `P_j = λx_{2j} − x_{2j−1}x_n` as strings in `x1..xn` with parameter `l`.
pub fn compression_polys(n: usize) -> Vec<String> {
    (1..=(n - 1) / 2).map(|j| format!("l*x{} - x{}*x{}", 2 * j, 2 * j - 1, n)).collect()
}

pub fn compression_variety(n: usize, lambda: f64) -> Result<Variety> {
    let names = x_names(n);
    let vars: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let polys = compression_polys(n).iter().map(|s| Poly::parse(s, &vars, &[("l", lambda)])).collect::<Result<Vec<_>>>()?;
    Ok(Variety::unchecked(polys, n))
}

fn check_lambdas(l: &[f64], max: f64) -> Result<()> {
    if l.len() < 3 {
        return Err(Error::Parameter("need at least 3 values of λ".into()));
    }
    for &v in l {
        if !(v >= 2.0 && v <= max && v.log2().fract() == 0.0) {
            return Err(Error::Parameter(format!("λ = {} must be dyadic and at most {}", v, max)));
        }
    }
    Ok(())
}

/// Centres of the `λ^{−1/2}`-caps inside `B(0, radius)`.
pub fn cap_centers(d: usize, lambda: f64, radius: f64) -> Vec<Vec<f64>> {
    let h = lambda.powf(-0.5);
    let k = (radius / h).floor() as i64;
    let width = (2 * k + 1) as usize;
    let mut out = Vec::new();
    for i in 0..width.pow(d as u32) {
        let mut rem = i;
        let w: Vec<f64> = (0..d)
            .map(|_| {
                let v = (rem % width) as i64 - k;
                rem /= width;
                v as f64 * h
            })
            .collect();
        if norm(&w) <= radius {
            out.push(w);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KakeyaConfig {
    pub n: usize,
    pub lambdas: Vec<f64>,
    /// Radius of the ω-ball covered by caps.
    pub omega_radius: f64,
    /// Tube radius is `c·λ^{1/2}`.
    pub tube_c: f64,
    pub volume_samples: usize,
    pub core_samples: usize,
    pub seed: u64,
}

impl Default for KakeyaConfig {
    fn default() -> Self {
        KakeyaConfig { n: 3, lambdas: vec![64.0, 128.0, 256.0, 512.0], omega_radius: 0.5, tube_c: 0.5, volume_samples: 40_000, core_samples: 33, seed: 1 }
    }
}

/// `v_{θ,2j−1} = −ω_{θ,2j}`, other entries zero.
pub fn kakeya_v(omega: &[f64]) -> Vec<f64> {
    let d = omega.len();
    let mut v = vec![0.0; d];
    for j in 1..=d / 2 {
        v[2 * j - 2] = -omega[2 * j - 1];
    }
    v
}

/// Volume of the union of compressed tubes and the core-curve residuals on `Z`.
pub fn kakeya_compression(cfg: &KakeyaConfig) -> Result<ExperimentReport> {
    check_lambdas(&cfg.lambdas, 512.0)?;
    let n = cfg.n;
    let phase = sharp_example_phase(n, kakeya_block())?;
    let d = n - 1;
    let mut rep = ExperimentReport::new("kakeya-compression", n, cfg.seed);
    for &lambda in &cfg.lambdas {
        let caps = cap_centers(d, lambda, cfg.omega_radius);
        let z = compression_variety(n, lambda)?;
        let ts: Vec<f64> = (0..cfg.core_samples).map(|i| -lambda + 2.0 * lambda * i as f64 / (cfg.core_samples - 1) as f64).collect();
        let residuals: Vec<(f64, usize)> = caps
            .par_iter()
            .map(|w| {
                let v: Vec<f64> = kakeya_v(w).iter().map(|c| c * lambda).collect();
                let c = core_curve(&phase, w, &v, lambda, &ts)?;
                let mut worst: f64 = 0.0;
                let mut count = 0;
                for (t, g) in c.t.iter().zip(&c.gamma) {
                    if let Some(g) = g {
                        let mut x = g.clone();
                        x.push(*t);
                        worst = z.values(&x).iter().fold(worst, |a, p| a.max(p.abs()));
                        count += 1;
                    }
                }
                Ok((worst, count))
            })
            .collect::<Result<_>>()?;
        let max_p = residuals.iter().map(|r| r.0).fold(0.0, f64::max);
        let points: usize = residuals.iter().map(|r| r.1).sum();
        // Monte-Carlo volume of the union inside B(0, λ).
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ lambda.to_bits());
        let mut samples = Vec::with_capacity(cfg.volume_samples);
        while samples.len() < cfg.volume_samples {
            let x: Vec<f64> = (0..n).map(|_| lambda * (2.0 * rng.random::<f64>() - 1.0)).collect();
            if norm(&x) <= lambda {
                samples.push(x);
            }
        }
        let width = cfg.tube_c * lambda.sqrt();
        let vs: Vec<Vec<f64>> = caps.iter().map(|w| kakeya_v(w)).collect();
        let hits: usize = samples
            .par_iter()
            .map(|x| {
                let a = phase.model_matrix(x[n - 1] / lambda).expect("model phase");
                let inside = caps.iter().zip(&vs).any(|(w, v)| {
                    let aw = &a * nalgebra::DVector::from_row_slice(w);
                    let off: f64 = (0..d).map(|i| (x[i] - lambda * (v[i] - aw[i])).powi(2)).sum::<f64>().sqrt();
                    off < width
                });
                inside as usize
            })
            .sum();
        let ball = ball_volume(n, lambda);
        let frac = hits as f64 / cfg.volume_samples as f64;
        let mut extra = BTreeMap::new();
        extra.insert("max_abs_p_over_lambda_sq".into(), max_p / (lambda * lambda));
        extra.insert("core_points".into(), points as f64);
        extra.insert("caps".into(), caps.len() as f64);
        extra.insert("volume_std_error".into(), ball * (frac * (1.0 - frac) / cfg.volume_samples as f64).sqrt());
        rep.measurements.push(Measurement { param: lambda, value: ball * frac, extra });
    }
    let m = n - (n - 1) / 2;
    Ok(rep.finish(Some(m as f64 + (n - m) as f64 / 2.0), Some(0.2)))
}

fn ball_volume(n: usize, r: f64) -> f64 {
    std::f64::consts::PI.powf(n as f64 / 2.0) / statrs::function::gamma::gamma(n as f64 / 2.0 + 1.0) * r.powi(n as i32)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MassConfig {
    pub n: usize,
    pub lambdas: Vec<f64>,
    /// Width of the neighbourhood `N_c(Z)`.
    pub c: f64,
    pub samples: usize,
    /// Points are taken in `B(0, region_factor·λ)`.
    pub region_factor: f64,
    pub psi_radius: f64,
    pub percentile: f64,
    pub seed: u64,
}

impl Default for MassConfig {
    fn default() -> Self {
        MassConfig { n: 3, lambdas: vec![64.0, 128.0, 256.0, 512.0], c: 0.1, samples: 1000, region_factor: 0.25, psi_radius: 0.9, percentile: 0.1, seed: 1 }
    }
}

/// `Q(ω) = ½ Σ_j ω_{2j−1}²`.
pub fn mass_q(d: usize) -> Poly {
    let mut q = Poly::zero(d);
    for j in 1..=(d + 1) / 2 {
        q = &q + &Poly::var(d, 2 * j - 2).pow(2).scale(0.5);
    }
    q
}

fn percentile(v: &mut [f64], q: f64) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if v.is_empty() {
        return 0.0;
    }
    v[((q * (v.len() - 1) as f64).round() as usize).min(v.len() - 1)]
}

/// Low percentile of `|T^λf|` on `N_c(Z)` for the modulated bump.
pub fn mass_concentration(cfg: &MassConfig) -> Result<ExperimentReport> {
    check_lambdas(&cfg.lambdas, 512.0)?;
    let n = cfg.n;
    let d = n - 1;
    let phase = sharp_example_phase(n, bourgain_block())?;
    let amp = AmplitudeSpec::constant_one(1.0);
    let mut rep = ExperimentReport::new("mass-concentration", n, cfg.seed);
    for &lambda in &cfg.lambdas {
        let f = InputFunction::ModulatedBump { q: Some(mass_q(d)), lambda_mod: lambda, center: vec![0.0; d], radius: cfg.psi_radius };
        let radius = cfg.region_factor * lambda;
        let polys = compression_polys(n);
        let region = if polys.is_empty() {
            Region::Ball { center: vec![0.0; n], radius }
        } else {
            Region::VarietyNeighborhood { polys, params: vec![("l".into(), lambda)], width: cfg.c, center: vec![0.0; n], radius }
        };
        let pts = PointSet::stratified(region, cfg.samples, cfg.seed ^ lambda.to_bits())?;
        let field = evaluate_on(&phase, &amp, lambda, &f, pts, &EvalOptions::default())?;
        let mut mags: Vec<f64> = field.values.iter().map(|v| v.norm()).collect();
        let low = percentile(&mut mags, cfg.percentile);
        let mut extra = BTreeMap::new();
        extra.insert("median".into(), percentile(&mut mags, 0.5));
        extra.insert("points".into(), mags.len() as f64);
        extra.insert("lattice_spacing".into(), field.lattice_spacing);
        rep.measurements.push(Measurement { param: lambda, value: low, extra });
    }
    Ok(rep.finish(Some(-((n / 2) as f64) / 2.0), Some(0.1)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransverseConfig {
    pub n: usize,
    pub r: f64,
    pub lambda: f64,
    pub rhos: Vec<f64>,
    pub delta: f64,
    pub delta_m: f64,
    /// `false` replaces the hyperplane by the whole space.
    pub hyperplane: bool,
    pub grid_spacing: f64,
    /// Keep only the first tangent packets.
    pub packets: Option<usize>,
    pub seed: u64,
}

impl Default for TransverseConfig {
    fn default() -> Self {
        TransverseConfig { n: 3, r: 256.0, lambda: 256.0, rhos: vec![32.0, 64.0, 128.0], delta: 0.05, delta_m: 0.2, hyperplane: true, grid_spacing: 1.5, packets: None, seed: 1 }
    }
}

/// Tangent part of a random packet sum for `φ_par` and `Z = {x₁ = 0}`.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentFamily {
    pub g: InputFunction,
    pub tangent: usize,
    pub classified: usize,
    pub g_norm: f64,
}

pub fn tangent_family(cfg: &TransverseConfig, phase: &PhaseSpec, z: &Variety) -> Result<TangentFamily> {
    let (r, lambda, n) = (cfg.r, cfg.lambda, cfg.n);
    let d = n - 1;
    let rho_max = cfg.rhos.iter().cloned().fold(0.0, f64::max);
    let tau = rho_max.powf(-0.5 + cfg.delta_m);
    let ball_r = r.powf(0.5 + cfg.delta_m);
    let scale = PacketScale::new(d, r, cfg.delta, 1.0 / (2.5 * lambda))?;
    let caps: Vec<Vec<i64>> = scale.caps_meeting(&vec![0.0; d], tau).into_iter().filter(|t| norm(&scale.cap_center(t)) <= tau).collect();
    let reach = ((ball_r + scale.tube_radius()) / scale.s).ceil() as i64;
    let width = (2 * reach + 1) as usize;
    let vs: Vec<Vec<f64>> = (0..width.pow(d as u32))
        .map(|i| {
            let mut rem = i;
            (0..d)
                .map(|_| {
                    let k = (rem % width) as i64 - reach;
                    rem /= width;
                    k as f64 * scale.s
                })
                .collect()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut candidates = Vec::new();
    for t in &caps {
        for v in &vs {
            let sign: i8 = if rng.random::<bool>() { 1 } else { -1 };
            candidates.push((t.clone(), v.clone(), sign));
        }
    }
    let params = TangencyParams::default();
    let mut tangent: Vec<PacketTerm> = candidates
        .par_iter()
        .map(|(t, v, sign)| -> Result<Option<PacketTerm>> {
            let packet = WavePacket {
                theta: t.clone(),
                omega_theta: scale.cap_center(t),
                v_index: Vec::new(),
                v: v.clone(),
                r,
                delta: cfg.delta,
                spacing: scale.spacing,
                indices: Vec::new(),
                values: Vec::new(),
            };
            let tube = Tube::new(phase, &packet, lambda, 33)?;
            if !tube.core_points().iter().any(|x| norm(x) <= ball_r + tube.radius) {
                return Ok(None);
            }
            let class = tangency_classify(phase, &tube, z, r, cfg.delta_m, params)?;
            Ok(class.tangent.then(|| PacketTerm { center: packet.omega_theta, v: v.clone(), radius: scale.cap_radius(), sign: *sign }))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    if tangent.is_empty() {
        return Err(Error::Construction("no tangent wave packets found".into()));
    }
    if let Some(k) = cfg.packets {
        tangent.truncate(k.max(1));
    }
    let count = tangent.len();
    let g = InputFunction::Packets { dim: d, terms: tangent };
    let (c, rad) = g.support().expect("nonempty packets");
    let g_norm = g.l2_norm(&OmegaLattice::ball(d, scale.spacing, &c, rad))?;
    Ok(TangentFamily { g, tangent: count, classified: candidates.len(), g_norm })
}

/// `∫_{N_{ρ^{1/2+δ_m}}(Z) ∩ B} |T^λ g|² / (R^{1/2}‖g‖²)` as a function of `ρ`.
pub fn transverse_equidistribution(cfg: &TransverseConfig) -> Result<ExperimentReport> {
    let (r, n) = (cfg.r, cfg.n);
    if cfg.rhos.len() < 3 || cfg.rhos.iter().any(|&p| !(p > r.sqrt() && p < r)) {
        return Err(Error::Parameter("need at least 3 values of ρ with R^{1/2} < ρ < R".into()));
    }
    let phase = PhaseSpec::paraboloid(n);
    let amp = AmplitudeSpec::constant_one(1.0);
    let hyper = {
        let mut p = Poly::zero(n);
        p = &p + &Poly::var(n, 0);
        Variety::unchecked(vec![p], n)
    };
    let z = if cfg.hyperplane { hyper.clone() } else { Variety::whole_space(n) };
    let fam = tangent_family(cfg, &phase, &hyper)?;
    let ball_r = r.powf(0.5 + cfg.delta_m);
    let widest = cfg.rhos.iter().map(|p| p.powf(0.5 + cfg.delta_m)).fold(0.0, f64::max);
    let h = cfg.grid_spacing;
    let k = (ball_r / h).ceil() as i64;
    let width = (2 * k + 1) as usize;
    let mut pts = Vec::new();
    let mut offsets = Vec::new();
    for i in 0..width.pow(n as u32) {
        let mut rem = i;
        let x: Vec<f64> = (0..n)
            .map(|_| {
                let v = (rem % width) as i64 - k;
                rem /= width;
                v as f64 * h
            })
            .collect();
        if norm(&x) > ball_r {
            continue;
        }
        let off = if z.is_whole_space() { 0.0 } else { x[0].abs() };
        if off <= widest {
            pts.push(x);
            offsets.push(off);
        }
    }
    let op = Operator::new(&phase, &amp, cfg.lambda, &fam.g, &pts, &EvalOptions::default())?;
    let vals = op.values(&pts);
    let cell = h.powi(n as i32);
    let norm_sq = fam.g_norm * fam.g_norm;
    let mut rep = ExperimentReport::new("transverse-equidistribution", n, cfg.seed);
    let total: f64 = vals.iter().map(|v| v.norm_sqr()).sum::<f64>() * cell;
    for &rho in &cfg.rhos {
        let w = rho.powf(0.5 + cfg.delta_m);
        let s: f64 = vals.iter().zip(&offsets).filter(|(_, o)| **o <= w).map(|(v, _)| v.norm_sqr()).sum::<f64>() * cell;
        let mut extra = BTreeMap::new();
        extra.insert("neighbourhood_width".into(), w);
        extra.insert("tangent_packets".into(), fam.tangent as f64);
        extra.insert("classified_packets".into(), fam.classified as f64);
        extra.insert("slab_mass_fraction".into(), if total > 0.0 { s / total } else { 0.0 });
        rep.measurements.push(Measurement { param: rho, value: s / (r.sqrt() * norm_sq), extra });
    }
    let expected = if cfg.hyperplane { 0.5 } else { 0.0 };
    let mut rep = rep.finish(Some(expected), Some(0.2));
    if let Some(f) = &rep.fit {
        rep.pass = Some(f.slope >= expected - 0.2);
    }
    Ok(rep)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepConfig {
    pub phase: PhaseSpec,
    pub amplitude: AmplitudeSpec,
    pub input: InputFunction,
    /// For modulated bumps, set the modulation parameter to `λ`.
    #[serde(default)]
    pub modulate_with_lambda: bool,
    pub p: f64,
    /// Norm over `B(0, region_factor·λ)`.
    pub region_factor: f64,
    pub samples: usize,
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub expected: Option<f64>,
    #[serde(default)]
    pub tolerance: Option<f64>,
}

/// `‖T^λ f‖_{L^p(B(0, cλ))}` against `λ`.
pub fn scaling_sweep(cfg: &SweepConfig) -> Result<ExperimentReport> {
    if cfg.lambdas.len() < 3 {
        return Err(Error::Parameter("need at least 3 values of λ".into()));
    }
    let phase = cfg.phase.clone().rehydrate();
    let n = phase.n;
    let mut rep = ExperimentReport::new("scaling-sweep", n, cfg.seed);
    for &lambda in &cfg.lambdas {
        let f = match (&cfg.input, cfg.modulate_with_lambda) {
            (InputFunction::ModulatedBump { q, center, radius, .. }, true) => {
                InputFunction::ModulatedBump { q: q.clone(), lambda_mod: lambda, center: center.clone(), radius: *radius }
            }
            (f, _) => f.clone(),
        };
        let region = Region::Ball { center: vec![0.0; n], radius: cfg.region_factor * lambda };
        let pts = PointSet::stratified(region, cfg.samples, cfg.seed ^ lambda.to_bits())?;
        let value = if matches!(f, InputFunction::Zero { .. }) {
            0.0
        } else {
            let field = evaluate_on(&phase, &cfg.amplitude, lambda, &f, pts, &EvalOptions::default())?;
            lp_norm(&field, cfg.p)?.value
        };
        rep.measurements.push(Measurement { param: lambda, value, extra: BTreeMap::new() });
    }
    Ok(rep.finish(cfg.expected, cfg.tolerance))
}

/// `‖Σ ε_θ T f_θ‖₂ / ‖(Σ |T f_θ|²)^{1/2}‖₂` on `points`, one ratio per seed.
pub fn random_sign_ratios(phase: &PhaseSpec, amp: &AmplitudeSpec, lambda: f64, packets: &[PacketTerm], points: &[Vec<f64>], seeds: &[u64]) -> Result<Vec<f64>> {
    let d = phase.n - 1;
    let pieces: Vec<Vec<num_complex::Complex64>> = packets
        .iter()
        .map(|t| {
            let f = InputFunction::Packets { dim: d, terms: vec![PacketTerm { sign: 1, ..t.clone() }] };
            Ok(Operator::new(phase, amp, lambda, &f, points, &EvalOptions::default())?.values(points))
        })
        .collect::<Result<_>>()?;
    let square: f64 = (0..points.len()).map(|i| pieces.iter().map(|p| p[i].norm_sqr()).sum::<f64>()).sum();
    Ok(seeds
        .iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let signs: Vec<f64> = pieces.iter().map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            let signed: f64 = (0..points.len())
                .map(|i| pieces.iter().zip(&signs).map(|(p, e)| p[i] * *e).sum::<num_complex::Complex64>().norm_sqr())
                .sum();
            (signed / square).sqrt()
        })
        .collect())
}

/// Distance contrast: median of `|T^λf|` at points pushed `dist` off `Z` relative to points on `Z`.
pub fn mass_contrast(n: usize, lambda: f64, offset: f64, samples: usize, seed: u64) -> Result<(f64, f64)> {
    let d = n - 1;
    let phase = sharp_example_phase(n, bourgain_block())?;
    let amp = AmplitudeSpec::constant_one(1.0);
    let f = InputFunction::ModulatedBump { q: Some(mass_q(d)), lambda_mod: lambda, center: vec![0.0; d], radius: 0.9 };
    let region = Region::VarietyNeighborhood { polys: compression_polys(n), params: vec![("l".into(), lambda)], width: 0.1, center: vec![0.0; n], radius: 0.25 * lambda };
    let on = PointSet::stratified(region, samples, seed)?;
    let z = compression_variety(n, lambda)?;
    let far: Vec<Vec<f64>> = on
        .points
        .iter()
        .filter_map(|x| {
            let p = z.project(x)?;
            let g = z.gradients(&p);
            let nv: Vec<f64> = g.row(0).iter().cloned().collect();
            let len = norm(&nv);
            let y: Vec<f64> = p.iter().zip(&nv).map(|(a, b)| a + offset * b / len).collect();
            (dist(&y, &vec![0.0; n]) <= lambda).then_some(y)
        })
        .collect();
    let a = evaluate_on(&phase, &amp, lambda, &f, on, &EvalOptions::default())?;
    let b = evaluate_on(&phase, &amp, lambda, &f, PointSet::given(far), &EvalOptions::default())?;
    let mut va: Vec<f64> = a.values.iter().map(|v| v.norm()).collect();
    let mut vb: Vec<f64> = b.values.iter().map(|v| v.norm()).collect();
    Ok((percentile(&mut va, 0.5), percentile(&mut vb, 0.5)))
}

/// Runs an experiment by name from a JSON configuration.
pub fn run_named(name: &str, config: serde_json::Value) -> Result<ExperimentReport> {
    let parse = |e: serde_json::Error| Error::Parse(format!("experiment config: {}", e));
    match name {
        "kakeya-compression" => kakeya_compression(&serde_json::from_value(config).map_err(parse)?),
        "mass-concentration" => mass_concentration(&serde_json::from_value(config).map_err(parse)?),
        "transverse-equidistribution" => transverse_equidistribution(&serde_json::from_value(config).map_err(parse)?),
        "scaling-sweep" => scaling_sweep(&serde_json::from_value(config).map_err(parse)?),
        other => Err(Error::Parameter(format!("unknown experiment '{}'", other))),
    }
}

pub const EXPERIMENTS: [&str; 4] = ["kakeya-compression", "mass-concentration", "transverse-equidistribution", "scaling-sweep"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_cap_curve_is_the_vertical_axis() {
        let phase = sharp_example_phase(3, kakeya_block()).unwrap();
        let c = core_curve(&phase, &[0.0, 0.0], &kakeya_v(&[0.0, 0.0]), 64.0, &[-10.0, 0.0, 10.0]).unwrap();
        for g in c.gamma.iter().flatten() {
            assert!(norm(g) < 1e-9);
        }
    }

    #[test]
    fn compressed_curve_lies_on_z() {
        let lambda = 128.0;
        let phase = sharp_example_phase(3, kakeya_block()).unwrap();
        let w = [0.2, -0.3];
        let v: Vec<f64> = kakeya_v(&w).iter().map(|c| c * lambda).collect();
        let z = compression_variety(3, lambda).unwrap();
        let c = core_curve(&phase, &w, &v, lambda, &[-50.0, 7.0, 90.0]).unwrap();
        for (t, g) in c.t.iter().zip(&c.gamma) {
            let mut x = g.clone().unwrap();
            x.push(*t);
            assert!(z.values(&x)[0].abs() <= 1e-6 * lambda * lambda);
        }
    }

    #[test]
    fn zero_input_sweep_is_flagged() {
        let cfg = SweepConfig {
            phase: PhaseSpec::paraboloid(2),
            amplitude: AmplitudeSpec::constant_one(1.0),
            input: InputFunction::Zero { dim: 1 },
            modulate_with_lambda: false,
            p: 2.0,
            region_factor: 0.25,
            samples: 50,
            lambdas: vec![16.0, 32.0, 64.0],
            seed: 1,
            expected: None,
            tolerance: None,
        };
        let r = scaling_sweep(&cfg).unwrap();
        assert!(r.fit.is_none() && !r.flags.is_empty());
    }

    #[test]
    fn cap_count_grows_like_lambda() {
        let a = cap_centers(2, 64.0, 0.5).len() as f64;
        let b = cap_centers(2, 256.0, 0.5).len() as f64;
        assert!((b / a - 4.0).abs() < 0.6);
    }
}
