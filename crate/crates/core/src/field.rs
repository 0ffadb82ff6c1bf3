//! Evaluation of `T^λ f` as a weighted exponential sum over an ω-lattice,
//! sampled fields, L^p estimates and the L² / decay checks built on them.

use std::collections::HashMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::amplitude::AmplitudeSpec;
use crate::error::{Error, Result};
use crate::numerics::{bump, bump_derivatives, cis_cycles, dist, integrate, loglog_fit, norm, pairwise_sum, LinearFit};
use crate::phase::PhaseSpec;
use crate::poly::{x_names, Poly};
use crate::variety::Variety;

/// Points `spacing·k`, `k ∈ ℤ^dim`, inside a ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaLattice {
    pub dim: usize,
    pub spacing: f64,
    pub indices: Vec<Vec<i64>>,
}

impl OmegaLattice {
    pub fn ball(dim: usize, spacing: f64, center: &[f64], radius: f64) -> Self {
        let lo: Vec<i64> = center.iter().map(|c| ((c - radius) / spacing).floor() as i64).collect();
        let hi: Vec<i64> = center.iter().map(|c| ((c + radius) / spacing).ceil() as i64).collect();
        let mut indices = Vec::new();
        let mut k = lo.clone();
        loop {
            let w: Vec<f64> = k.iter().map(|&v| v as f64 * spacing).collect();
            if dist(&w, center) <= radius {
                indices.push(k.clone());
            }
            let mut d = 0;
            loop {
                if d == dim {
                    return OmegaLattice { dim, spacing, indices };
                }
                k[d] += 1;
                if k[d] <= hi[d] {
                    break;
                }
                k[d] = lo[d];
                d += 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.indices[i].iter().map(|&k| k as f64 * self.spacing).collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }
}

/// One term `sign · e^{−2πi⟨v, ω−ω_c⟩} ψ(ω)` of a packet superposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PacketTerm {
    pub center: Vec<f64>,
    pub v: Vec<f64>,
    pub radius: f64,
    pub sign: i8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InputFunction {
    Zero { dim: usize },
    /// Samples on the lattice `spacing·ℤ^dim`.
    Lattice { dim: usize, spacing: f64, indices: Vec<Vec<i64>>, values: Vec<Complex64> },
    /// `e^{2πiλQ(ω)} ψ(ω)` with `ψ(ω) = e·bump(|ω−c|/r)`.
    ModulatedBump { q: Option<Poly>, lambda_mod: f64, center: Vec<f64>, radius: f64 },
    Packets { dim: usize, terms: Vec<PacketTerm> },
}

impl InputFunction {
    pub fn bump(center: Vec<f64>, radius: f64) -> Self {
        InputFunction::ModulatedBump { q: None, lambda_mod: 0.0, center, radius }
    }

    pub fn dim(&self) -> usize {
        match self {
            InputFunction::Zero { dim } | InputFunction::Lattice { dim, .. } | InputFunction::Packets { dim, .. } => *dim,
            InputFunction::ModulatedBump { center, .. } => center.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            InputFunction::Packets { terms, .. } if terms.iter().any(|t| t.sign != 1 && t.sign != -1) => {
                Err(Error::Construction("packet signs must be ±1".into()))
            }
            InputFunction::Lattice { indices, values, .. } if indices.len() != values.len() => {
                Err(Error::Construction("lattice samples and indices differ in length".into()))
            }
            _ => Ok(()),
        }
    }

    /// Ball containing the support, or `None` for the zero function.
    pub fn support(&self) -> Option<(Vec<f64>, f64)> {
        match self {
            InputFunction::Zero { .. } => None,
            InputFunction::ModulatedBump { center, radius, .. } => Some((center.clone(), *radius)),
            InputFunction::Packets { dim, terms } => {
                if terms.is_empty() {
                    return None;
                }
                let mut c = vec![0.0; *dim];
                for t in terms {
                    for (a, b) in c.iter_mut().zip(&t.center) {
                        *a += b / terms.len() as f64;
                    }
                }
                let r = terms.iter().map(|t| dist(&c, &t.center) + t.radius).fold(0.0, f64::max);
                Some((c, r))
            }
            InputFunction::Lattice { dim, spacing, indices, values } => {
                let r = indices
                    .iter()
                    .zip(values)
                    .filter(|(_, v)| v.norm() > 0.0)
                    .map(|(k, _)| norm(&k.iter().map(|&i| i as f64 * spacing).collect::<Vec<_>>()))
                    .fold(-1.0, f64::max);
                if r < 0.0 {
                    None
                } else {
                    Some((vec![0.0; *dim], r + spacing))
                }
            }
        }
    }

    /// Smallest envelope length scale (sets the bandwidth margin of the lattice rule).
    fn envelope_scale(&self) -> f64 {
        match self {
            InputFunction::ModulatedBump { radius, .. } => *radius,
            InputFunction::Packets { terms, .. } => terms.iter().map(|t| t.radius).fold(f64::INFINITY, f64::min),
            InputFunction::Lattice { spacing, .. } => 4.0 * spacing,
            InputFunction::Zero { .. } => 1.0,
        }
    }

    /// Gradient of the modulation phase (in cycles) at ω.
    fn modulation_gradient(&self, w: &[f64]) -> f64 {
        match self {
            InputFunction::ModulatedBump { q: Some(q), lambda_mod, .. } => {
                let g: Vec<f64> = (0..w.len()).map(|j| lambda_mod * q.deriv(j).eval(w)).collect();
                norm(&g)
            }
            InputFunction::Packets { terms, .. } => terms.iter().map(|t| norm(&t.v)).fold(0.0, f64::max),
            _ => 0.0,
        }
    }

    pub fn sample(&self, w: &[f64]) -> Complex64 {
        match self {
            InputFunction::Zero { .. } => Complex64::new(0.0, 0.0),
            InputFunction::ModulatedBump { q, lambda_mod, center, radius } => {
                let b = std::f64::consts::E * bump(dist(w, center) / radius);
                if b == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                let ph = q.as_ref().map(|q| lambda_mod * q.eval(w)).unwrap_or(0.0);
                cis_cycles(ph) * b
            }
            InputFunction::Packets { terms, .. } => {
                let mut acc = Complex64::new(0.0, 0.0);
                for t in terms {
                    let b = std::f64::consts::E * bump(dist(w, &t.center) / t.radius);
                    if b > 0.0 {
                        let ph: f64 = -t.v.iter().zip(w.iter().zip(&t.center)).map(|(v, (a, c))| v * (a - c)).sum::<f64>();
                        acc += cis_cycles(ph) * (b * t.sign as f64);
                    }
                }
                acc
            }
            InputFunction::Lattice { spacing, indices, values, .. } => {
                let k: Vec<i64> = w.iter().map(|v| (v / spacing).round() as i64).collect();
                indices.iter().position(|i| *i == k).map(|p| values[p]).unwrap_or_default()
            }
        }
    }

    /// Samples on the given lattice.
    pub fn on_lattice(&self, lat: &OmegaLattice) -> Result<Vec<Complex64>> {
        if let InputFunction::Lattice { spacing, indices, values, .. } = self {
            if (spacing - lat.spacing).abs() > 1e-12 * spacing {
                return Err(Error::Parameter(format!(
                    "input sampled at spacing {:e} but the evaluation lattice uses {:e}",
                    spacing, lat.spacing
                )));
            }
            let map: HashMap<&Vec<i64>, Complex64> = indices.iter().zip(values.iter().copied()).collect();
            return Ok(lat.indices.iter().map(|k| map.get(k).copied().unwrap_or_default()).collect());
        }
        Ok((0..lat.len()).into_par_iter().map(|i| self.sample(&lat.point(i))).collect())
    }

    /// `‖f‖₂` by the lattice Riemann sum.
    pub fn l2_norm(&self, lat: &OmegaLattice) -> Result<f64> {
        let v = self.on_lattice(lat)?;
        let s: Vec<f64> = v.iter().map(|z| z.norm_sqr()).collect();
        Ok((pairwise_sum(&s) * lat.cell_volume()).sqrt())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Region {
    Ball { center: Vec<f64>, radius: f64 },
    /// `{c + Σ t_i a_i : Σ t_i² ≤ 1}` for semi-axis vectors `a_i`.
    Ellipse { center: Vec<f64>, axes: Vec<Vec<f64>> },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    VarietyNeighborhood { polys: Vec<String>, params: Vec<(String, f64)>, width: f64, center: Vec<f64>, radius: f64 },
    Points,
}

impl Region {
    pub fn dim(&self) -> Option<usize> {
        match self {
            Region::Ball { center, .. } | Region::Ellipse { center, .. } | Region::VarietyNeighborhood { center, .. } => Some(center.len()),
            Region::Box { lo, .. } => Some(lo.len()),
            Region::Points => None,
        }
    }

    /// Membership for the geometric regions; neighbourhoods and point sets accept everything.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Ball { center, radius } => dist(x, center) <= *radius,
            Region::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| v >= a && v <= b),
            Region::Ellipse { center, axes } => {
                let d: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
                let m = nalgebra::DMatrix::from_fn(d.len(), axes.len(), |i, j| axes[j][i]);
                match m.clone().lu().solve(&nalgebra::DVector::from_vec(d)) {
                    Some(t) => t.norm() <= 1.0 + 1e-12,
                    None => false,
                }
            }
            Region::VarietyNeighborhood { width, center, radius, .. } => {
                dist(x, center) <= *radius
                    && match self.variety() {
                        Ok(Some(z)) => z.dist(x).map(|(d, _)| d <= *width).unwrap_or(false),
                        _ => false,
                    }
            }
            Region::Points => true,
        }
    }

    /// The variety of a neighbourhood region.
    pub fn variety(&self) -> Result<Option<Variety>> {
        let Region::VarietyNeighborhood { polys, params, center, .. } = self else { return Ok(None) };
        let n = center.len();
        let names = x_names(n);
        let vars: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let params: Vec<(&str, f64)> = params.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        let polys = polys.iter().map(|s| Poly::parse(s, &vars, &params)).collect::<Result<Vec<_>>>()?;
        Ok(Some(Variety::unchecked(polys, n)))
    }

    fn bounding_box(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            Region::Ball { center, radius } => Ok((center.iter().map(|c| c - radius).collect(), center.iter().map(|c| c + radius).collect())),
            Region::Box { lo, hi } => Ok((lo.clone(), hi.clone())),
            Region::Ellipse { center, axes } => {
                let ext: Vec<f64> = (0..center.len()).map(|i| axes.iter().map(|a| a[i] * a[i]).sum::<f64>().sqrt()).collect();
                Ok((center.iter().zip(&ext).map(|(c, e)| c - e).collect(), center.iter().zip(&ext).map(|(c, e)| c + e).collect()))
            }
            _ => Err(Error::Parameter("region has no bounding box sampler".into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Scheme {
    Grid { spacing: f64 },
    Stratified { samples: usize, seed: u64 },
    Given,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Strata {
    pub ids: Vec<u32>,
    pub count: usize,
    pub draws_per_stratum: usize,
    pub volume: f64,
}

/// Points with integration weights and provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub region: Region,
    pub scheme: Scheme,
    pub strata: Option<Strata>,
}

impl PointSet {
    pub fn given(points: Vec<Vec<f64>>) -> Self {
        let k = points.len();
        PointSet { points, weights: vec![1.0; k], region: Region::Points, scheme: Scheme::Given, strata: None }
    }

    pub fn grid(region: Region, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::Parameter("grid spacing must be positive".into()));
        }
        let (lo, hi) = region.bounding_box()?;
        let n = lo.len();
        let counts: Vec<i64> = lo.iter().zip(&hi).map(|(a, b)| ((b - a) / spacing).floor() as i64 + 1).collect();
        let mut points = Vec::new();
        let mut k = vec![0i64; n];
        'outer: loop {
            let x: Vec<f64> = (0..n).map(|i| lo[i] + k[i] as f64 * spacing).collect();
            if region.contains(&x) {
                points.push(x);
            }
            let mut d = 0;
            loop {
                if d == n {
                    break 'outer;
                }
                k[d] += 1;
                if k[d] < counts[d] {
                    break;
                }
                k[d] = 0;
                d += 1;
            }
        }
        let w = spacing.powi(n as i32);
        let m = points.len();
        Ok(PointSet { points, weights: vec![w; m], region, scheme: Scheme::Grid { spacing }, strata: None })
    }

    /// Two uniform draws per cube of a regular stratification of the bounding box;
    /// draws outside the region are discarded but counted.
    ///
    /// For variety neighbourhoods each draw is projected onto the variety and
    /// pushed off it along a random normal direction, with unit weights.
    pub fn stratified(region: Region, samples: usize, seed: u64) -> Result<Self> {
        if let Region::VarietyNeighborhood { center, radius, .. } = &region {
            return Self::stratified_neighborhood(region.clone(), center.clone(), *radius, samples, seed);
        }
        let (lo, hi) = region.bounding_box()?;
        let n = lo.len();
        let draws = 2usize;
        let per_axis = ((samples as f64 / draws as f64).powf(1.0 / n as f64)).ceil().max(1.0) as usize;
        let count = per_axis.pow(n as u32);
        let side: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| (b - a) / per_axis as f64).collect();
        let volume: f64 = side.iter().product();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::new();
        let mut ids = Vec::new();
        for s in 0..count {
            let mut rem = s;
            let cell: Vec<usize> = (0..n)
                .map(|_| {
                    let c = rem % per_axis;
                    rem /= per_axis;
                    c
                })
                .collect();
            for _ in 0..draws {
                let x: Vec<f64> = (0..n).map(|i| lo[i] + (cell[i] as f64 + rng.random::<f64>()) * side[i]).collect();
                if region.contains(&x) {
                    points.push(x);
                    ids.push(s as u32);
                }
            }
        }
        let w = volume / draws as f64;
        let m = points.len();
        Ok(PointSet {
            points,
            weights: vec![w; m],
            region,
            scheme: Scheme::Stratified { samples, seed },
            strata: Some(Strata { ids, count, draws_per_stratum: draws, volume }),
        })
    }

    fn stratified_neighborhood(region: Region, center: Vec<f64>, radius: f64, samples: usize, seed: u64) -> Result<Self> {
        let Region::VarietyNeighborhood { width, .. } = &region else { unreachable!() };
        let width = *width;
        let z = region.variety()?.expect("neighbourhood region");
        let n = center.len();
        let codim = z.polys.len();
        let draws = 2usize;
        let per_axis = ((samples as f64 / draws as f64).powf(1.0 / n as f64)).ceil().max(1.0) as usize;
        let count = per_axis.pow(n as u32);
        let side = 2.0 * radius / per_axis as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draws_all = Vec::with_capacity(count * draws);
        for s in 0..count {
            let mut rem = s;
            let cell: Vec<usize> = (0..n)
                .map(|_| {
                    let c = rem % per_axis;
                    rem /= per_axis;
                    c
                })
                .collect();
            for _ in 0..draws {
                let x: Vec<f64> = (0..n).map(|i| center[i] - radius + (cell[i] as f64 + rng.random::<f64>()) * side).collect();
                let dir: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
                let u: f64 = rng.random();
                draws_all.push((s as u32, x, dir, u));
            }
        }
        let kept: Vec<Option<(u32, Vec<f64>)>> = draws_all
            .par_iter()
            .map(|(s, x, dir, u)| {
                let p = z.project(x)?;
                let y = if codim == 0 {
                    p
                } else {
                    let g = z.gradients(&p).transpose();
                    let q = g.qr().q();
                    let c = q.transpose() * nalgebra::DVector::from_row_slice(dir);
                    let off = &q * c;
                    let len = off.norm().max(1e-300);
                    let r = width * u.powf(1.0 / codim as f64);
                    p.iter().zip(off.iter()).map(|(a, b)| a + r * b / len).collect()
                };
                (dist(&y, &center) <= radius).then_some((*s, y))
            })
            .collect();
        let (ids, points): (Vec<u32>, Vec<Vec<f64>>) = kept.into_iter().flatten().unzip();
        let m = points.len();
        Ok(PointSet {
            points,
            weights: vec![1.0; m],
            region,
            scheme: Scheme::Stratified { samples, seed },
            strata: Some(Strata { ids, count, draws_per_stratum: draws, volume: side.powi(n as i32) }),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledField {
    pub lambda: f64,
    pub points: PointSet,
    pub values: Vec<Complex64>,
    pub lattice_spacing: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpEstimate {
    pub value: f64,
    pub std_error: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FastMode {
    On,
    #[default]
    Off,
    Audit,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Fixed ω-lattice spacing; chosen by the resolution rule when `None`.
    pub spacing: Option<f64>,
    pub fast: FastMode,
}

impl SampledField {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let n = self.points.points.first().map(|p| p.len()).unwrap_or(0);
        let mut s = String::new();
        for i in 1..=n {
            s.push_str(&format!("x{},", i));
        }
        s.push_str("re,im\n");
        for (p, v) in self.points.points.iter().zip(&self.values) {
            for c in p {
                s.push_str(&format!("{:e},", c));
            }
            s.push_str(&format!("{:e},{:e}\n", v.re, v.im));
        }
        s
    }

    pub fn header_json(&self) -> serde_json::Value {
        serde_json::json!({
            "lambda": self.lambda,
            "region": self.points.region,
            "scheme": self.points.scheme,
            "points": self.values.len(),
            "lattice_spacing": self.lattice_spacing,
        })
    }
}

/// `(∫_region |T^λf|^p)^{1/p}`, or the sampled sup for `p = ∞`.
pub fn lp_norm(field: &SampledField, p: f64) -> Result<LpEstimate> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::Parameter(format!("p must be >= 1, got {}", p)));
    }
    if field.is_empty() {
        return Err(Error::Parameter("empty field".into()));
    }
    if p.is_infinite() {
        return Ok(LpEstimate { value: field.max_abs(), std_error: 0.0 });
    }
    let g: Vec<f64> = field.values.iter().map(|v| v.norm().powf(p)).collect();
    let terms: Vec<f64> = g.iter().zip(&field.points.weights).map(|(a, w)| a * w).collect();
    let integral = pairwise_sum(&terms);
    let var = match &field.points.strata {
        Some(st) => {
            let mut sums = vec![0.0; st.count];
            let mut sq = vec![0.0; st.count];
            for (gi, &id) in g.iter().zip(&st.ids) {
                sums[id as usize] += gi;
                sq[id as usize] += gi * gi;
            }
            let k = st.draws_per_stratum as f64;
            sums.iter()
                .zip(&sq)
                .map(|(s, q)| {
                    let mean = s / k;
                    let sv = ((q - k * mean * mean) / (k - 1.0)).max(0.0);
                    st.volume * st.volume * sv / k
                })
                .sum::<f64>()
        }
        None => 0.0,
    };
    let value = integral.powf(1.0 / p);
    let std_error = if integral > 0.0 { value / (p * integral) * var.sqrt() } else { 0.0 };
    Ok(LpEstimate { value, std_error })
}

/// Weighted exponential sum prepared for repeated evaluation.
pub struct Operator<'a> {
    phase: &'a PhaseSpec,
    amp: &'a AmplitudeSpec,
    lambda: f64,
    pub lattice: OmegaLattice,
    groups: Vec<Vec<(Vec<u32>, f64)>>,
    mono: Vec<f64>,
    weights: Vec<Complex64>,
}

fn max_coord(points: &[Vec<f64>]) -> f64 {
    points.iter().map(|p| norm(p)).fold(0.0, f64::max)
}

/// Largest admissible lattice spacing for the given points.
pub fn required_spacing(phase: &PhaseSpec, amp: &AmplitudeSpec, lambda: f64, f: &InputFunction, points: &[Vec<f64>]) -> f64 {
    let Some((c, r)) = f.support() else { return 1.0 / lambda };
    let r = r.min(amp.omega_radius + norm(&c));
    let d = c.len();
    let mx = max_coord(points).max(1.0);
    // Probe ω on a coarse grid over the support.
    let m: usize = if d == 1 { 17 } else { 9 };
    let mut probes = Vec::new();
    for i in 0..m.pow(d as u32) {
        let mut rem = i;
        let w: Vec<f64> = (0..d)
            .map(|j| {
                let t = (rem % m) as f64 / (m - 1) as f64 * 2.0 - 1.0;
                rem /= m;
                c[j] + r * t
            })
            .collect();
        if dist(&w, &c) <= r * (1.0 + 1e-9) {
            probes.push(w);
        }
    }
    // Gradient at a subsample of the points plus the farthest one.
    let step = (points.len() / 256).max(1);
    let mut idx: Vec<usize> = (0..points.len()).step_by(step).collect();
    if let Some(far) = (0..points.len()).max_by(|&a, &b| norm(&points[a]).partial_cmp(&norm(&points[b])).unwrap()) {
        idx.push(far);
    }
    let g = idx
        .par_iter()
        .map(|&i| {
            probes
                .iter()
                .map(|w| norm(&phase.grad_omega_lambda(&points[i], w, lambda)) + f.modulation_gradient(w))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    let bandwidth = 2.0 / f.envelope_scale().max(1e-12);
    (1.0 / lambda).min(std::f64::consts::TAU / (10.0 * mx)).min(1.0 / (g + bandwidth))
}

impl<'a> Operator<'a> {
    pub fn new(
        phase: &'a PhaseSpec,
        amp: &'a AmplitudeSpec,
        lambda: f64,
        f: &InputFunction,
        points: &[Vec<f64>],
        opts: &EvalOptions,
    ) -> Result<Self> {
        f.validate()?;
        if f.dim() != phase.n - 1 {
            return Err(Error::Parameter(format!("input has dimension {}, phase needs {}", f.dim(), phase.n - 1)));
        }
        if !(lambda >= 1.0) {
            return Err(Error::Parameter(format!("λ must be >= 1, got {}", lambda)));
        }
        let req = required_spacing(phase, amp, lambda, f, points);
        let spacing = match (opts.spacing, f) {
            (Some(h), _) => h,
            (None, InputFunction::Lattice { spacing, .. }) => *spacing,
            (None, _) => req,
        };
        if spacing > req * (1.0 + 1e-9) {
            let (c, r) = f.support().unwrap_or((vec![0.0; phase.n - 1], 1.0));
            let vol = OmegaLattice::ball(phase.n - 1, req.max(r / 2000.0), &c, r).len();
            return Err(Error::Resolution { spacing, required_spacing: req, required_points: vol });
        }
        let lattice = match f.support() {
            Some((c, r)) => {
                // Restrict to the amplitude's ω-ball when it is smaller.
                let full = OmegaLattice::ball(phase.n - 1, spacing, &c, r);
                let keep: Vec<Vec<i64>> = full
                    .indices
                    .into_iter()
                    .filter(|k| {
                        let w: Vec<f64> = k.iter().map(|&v| v as f64 * spacing).collect();
                        amp.omega_factor(&w) > 0.0
                    })
                    .collect();
                OmegaLattice { dim: phase.n - 1, spacing, indices: keep }
            }
            None => OmegaLattice { dim: phase.n - 1, spacing, indices: Vec::new() },
        };
        let fv = f.on_lattice(&lattice)?;
        let vol = lattice.cell_volume();
        let weights: Vec<Complex64> = (0..lattice.len()).map(|i| fv[i] * (vol * amp.omega_factor(&lattice.point(i)))).collect();
        // Group the phase polynomial by its ω-monomial.
        let n = phase.n;
        let mut by_beta: std::collections::BTreeMap<Vec<u32>, Vec<(Vec<u32>, f64)>> = Default::default();
        for (e, c) in phase.poly().terms() {
            by_beta.entry(e[n..].to_vec()).or_default().push((e[..n].to_vec(), c));
        }
        let betas: Vec<Vec<u32>> = by_beta.keys().cloned().collect();
        let groups: Vec<Vec<(Vec<u32>, f64)>> = by_beta.into_values().collect();
        let nb = betas.len();
        let mut mono = vec![0.0; lattice.len() * nb];
        for i in 0..lattice.len() {
            let w = lattice.point(i);
            for (b, beta) in betas.iter().enumerate() {
                mono[i * nb + b] = beta.iter().zip(&w).map(|(&k, &x)| x.powi(k as i32)).product();
            }
        }
        Ok(Operator { phase, amp, lambda, lattice, groups, mono, weights })
    }

    pub fn spacing(&self) -> f64 {
        self.lattice.spacing
    }

    pub fn value_at(&self, x: &[f64]) -> Complex64 {
        let xs: Vec<f64> = x.iter().map(|v| v / self.lambda).collect();
        let ax = self.amp.x_factor(&xs);
        if ax == 0.0 || self.weights.is_empty() {
            return Complex64::new(0.0, 0.0);
        }
        let coef: Vec<f64> = self
            .groups
            .iter()
            .map(|g| {
                self.lambda
                    * g.iter()
                        .map(|(alpha, c)| alpha.iter().zip(&xs).fold(*c, |acc, (&k, &v)| if k == 0 { acc } else { acc * v.powi(k as i32) }))
                        .sum::<f64>()
            })
            .collect();
        let nb = coef.len();
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, w) in self.weights.iter().enumerate() {
            let m = &self.mono[k * nb..(k + 1) * nb];
            let ph: f64 = coef.iter().zip(m).map(|(a, b)| a * b).sum();
            acc += w * cis_cycles(ph);
        }
        acc * ax
    }

    pub fn values(&self, points: &[Vec<f64>]) -> Vec<Complex64> {
        points.par_iter().map(|x| self.value_at(x)).collect()
    }

    pub fn phase(&self) -> &PhaseSpec {
        self.phase
    }
}

/// `T^λ f` at the given points.
pub fn evaluate(
    phase: &PhaseSpec,
    amp: &AmplitudeSpec,
    lambda: f64,
    f: &InputFunction,
    points: &[Vec<f64>],
    opts: &EvalOptions,
) -> Result<SampledField> {
    evaluate_on(phase, amp, lambda, f, PointSet::given(points.to_vec()), opts)
}

pub fn evaluate_on(
    phase: &PhaseSpec,
    amp: &AmplitudeSpec,
    lambda: f64,
    f: &InputFunction,
    points: PointSet,
    opts: &EvalOptions,
) -> Result<SampledField> {
    if points.points.iter().any(|p| p.len() != phase.n) {
        return Err(Error::Parameter("point dimension does not match the phase".into()));
    }
    let op = Operator::new(phase, amp, lambda, f, &points.points, opts)?;
    let values = op.values(&points.points);
    Ok(SampledField { lambda, lattice_spacing: op.spacing(), points, values })
}

/// Uniform x'-grid at a list of heights `x_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XGrid {
    pub start: Vec<f64>,
    pub step: f64,
    pub counts: Vec<usize>,
    pub xn: Vec<f64>,
}

impl XGrid {
    pub fn len(&self) -> usize {
        self.counts.iter().product::<usize>() * self.xn.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Points ordered by height, then x' with the first coordinate fastest.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let per: usize = self.counts.iter().product();
        let mut out = Vec::with_capacity(self.len());
        for &t in &self.xn {
            for i in 0..per {
                let mut rem = i;
                let mut x: Vec<f64> = self
                    .counts
                    .iter()
                    .zip(&self.start)
                    .map(|(&c, &s)| {
                        let k = rem % c;
                        rem /= c;
                        s + k as f64 * self.step
                    })
                    .collect();
                x.push(t);
                out.push(x);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridEval {
    pub values: Vec<Complex64>,
    pub used_fast: bool,
    /// Max relative deviation between fast and direct evaluation on the audit set.
    pub audit_error: Option<f64>,
    pub lattice_spacing: f64,
}

/// `Σ_k c_k e^{2πi(x0 + jΔ)(ω0 + k h)}` for `j < m`, by Bluestein's chirp-z.
fn chirp_z(c: &[Complex64], x0: f64, dx: f64, m: usize, w0: f64, h: f64, planner: &mut FftPlanner<f64>) -> Vec<Complex64> {
    let k = c.len();
    if k == 0 || m == 0 {
        return vec![Complex64::new(0.0, 0.0); m];
    }
    let alpha = dx * h;
    let len = (k + m - 1).next_power_of_two();
    let mut a = vec![Complex64::new(0.0, 0.0); len];
    for (i, ci) in c.iter().enumerate() {
        let kk = i as f64;
        a[i] = ci * cis_cycles(x0 * kk * h) * cis_cycles(half_sq(alpha, i));
    }
    let mut b = vec![Complex64::new(0.0, 0.0); len];
    for j in 0..m {
        b[j] = cis_cycles(-half_sq(alpha, j));
    }
    for i in 1..k {
        b[len - i] = cis_cycles(-half_sq(alpha, i));
    }
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    inv.process(&mut a);
    let s = 1.0 / len as f64;
    (0..m)
        .map(|j| {
            let xj = x0 + j as f64 * dx;
            a[j] * s * cis_cycles(half_sq(alpha, j)) * cis_cycles(xj * w0)
        })
        .collect()
}

/// `α j²/2` reduced modulo 1 with exact integer arithmetic on `j²`.
fn half_sq(alpha: f64, j: usize) -> f64 {
    let jj = (j as u128) * (j as u128);
    let v = 0.5 * alpha * jj as f64;
    v - v.floor()
}

/// `T^λ f` on a uniform x'-grid, using a chirp-z transform when the phase is of extension form.
pub fn evaluate_grid(
    phase: &PhaseSpec,
    amp: &AmplitudeSpec,
    lambda: f64,
    f: &InputFunction,
    grid: &XGrid,
    opts: &EvalOptions,
) -> Result<GridEval> {
    let d = phase.n - 1;
    if grid.start.len() != d || grid.counts.len() != d {
        return Err(Error::Parameter("grid dimension does not match the phase".into()));
    }
    let corners = grid_extremes(grid);
    let op = Operator::new(phase, amp, lambda, f, &corners, opts)?;
    let h_ext = phase.extension_h();
    let use_fast = opts.fast != FastMode::Off && h_ext.is_some() && d <= 2;
    if !use_fast {
        let pts = grid.points();
        return Ok(GridEval { values: op.values(&pts), used_fast: false, audit_error: None, lattice_spacing: op.spacing() });
    }
    let h = h_ext.unwrap();
    let lat = &op.lattice;
    let sp = lat.spacing;
    let lo: Vec<i64> = (0..d).map(|j| lat.indices.iter().map(|k| k[j]).min().unwrap_or(0)).collect();
    let hi: Vec<i64> = (0..d).map(|j| lat.indices.iter().map(|k| k[j]).max().unwrap_or(0)).collect();
    let dims: Vec<usize> = (0..d).map(|j| (hi[j] - lo[j] + 1).max(0) as usize).collect();
    let hvals: Vec<f64> = (0..lat.len()).map(|i| h.eval(&lat.point(i))).collect();
    let per: usize = grid.counts.iter().product();
    let mut planner = FftPlanner::new();
    let mut values = Vec::with_capacity(grid.len());
    for &t in &grid.xn {
        let mut dense = vec![Complex64::new(0.0, 0.0); dims.iter().product::<usize>().max(1)];
        for (i, k) in lat.indices.iter().enumerate() {
            let mut off = 0;
            let mut stride = 1;
            for j in 0..d {
                off += (k[j] - lo[j]) as usize * stride;
                stride *= dims[j];
            }
            dense[off] = op.weights[i] * cis_cycles(t * hvals[i]);
        }
        let row: Vec<Complex64> = if lat.is_empty() {
            vec![Complex64::new(0.0, 0.0); per]
        } else if d == 1 {
            chirp_z(&dense, grid.start[0], grid.step, grid.counts[0], lo[0] as f64 * sp, sp, &mut planner)
        } else {
            // Transform along ω₂ for each ω₁ column, then along ω₁.
            let (k1, k2) = (dims[0], dims[1]);
            let (m1, m2) = (grid.counts[0], grid.counts[1]);
            let mut stage = vec![Complex64::new(0.0, 0.0); k1 * m2];
            for a in 0..k1 {
                let col: Vec<Complex64> = (0..k2).map(|b| dense[a + b * k1]).collect();
                let out = chirp_z(&col, grid.start[1], grid.step, m2, lo[1] as f64 * sp, sp, &mut planner);
                for (j2, v) in out.into_iter().enumerate() {
                    stage[a + j2 * k1] = v;
                }
            }
            let mut res = vec![Complex64::new(0.0, 0.0); m1 * m2];
            for j2 in 0..m2 {
                let col: Vec<Complex64> = (0..k1).map(|a| stage[a + j2 * k1]).collect();
                let out = chirp_z(&col, grid.start[0], grid.step, m1, lo[0] as f64 * sp, sp, &mut planner);
                for (j1, v) in out.into_iter().enumerate() {
                    res[j1 + j2 * m1] = v;
                }
            }
            res
        };
        values.extend(row);
    }
    // Apply the x cut-off of the amplitude.
    let pts = grid.points();
    for (v, x) in values.iter_mut().zip(&pts) {
        let xs: Vec<f64> = x.iter().map(|c| c / lambda).collect();
        *v *= amp.x_factor(&xs);
    }
    let mut audit_error = None;
    if opts.fast == FastMode::Audit {
        let scale = values.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
        let step = (pts.len() / 10).max(1);
        let mut worst: f64 = 0.0;
        for i in (0..pts.len()).step_by(step).take(10) {
            let direct = op.value_at(&pts[i]);
            worst = worst.max((direct - values[i]).norm() / scale);
        }
        if worst > 1e-8 {
            return Err(Error::Precondition(format!("fast transform audit failed: relative deviation {:e}", worst)));
        }
        audit_error = Some(worst);
    }
    Ok(GridEval { values, used_fast: true, audit_error, lattice_spacing: sp })
}

fn grid_extremes(grid: &XGrid) -> Vec<Vec<f64>> {
    let d = grid.start.len();
    let mut out = Vec::new();
    for &t in &grid.xn {
        for mask in 0..(1usize << d) {
            let mut x: Vec<f64> = (0..d)
                .map(|j| grid.start[j] + if mask >> j & 1 == 1 { (grid.counts[j].max(1) - 1) as f64 * grid.step } else { 0.0 })
                .collect();
            x.push(t);
            out.push(x);
        }
    }
    out
}

/// `‖T^λf‖_{L²(B_R)} / (R^{1/2}‖f‖₂)` for each `R`.
pub fn hormander_ratio(
    phase: &PhaseSpec,
    amp: &AmplitudeSpec,
    lambda: f64,
    f: &InputFunction,
    radii: &[f64],
    opts: &EvalOptions,
) -> Result<Vec<(f64, f64)>> {
    let d = phase.n - 1;
    let mut out = Vec::new();
    for &r in radii {
        if !(1.0..=lambda).contains(&r) {
            return Err(Error::Domain(format!("R = {} outside [1, λ = {}]", r, lambda)));
        }
        if f.support().is_none() {
            out.push((r, 0.0));
            continue;
        }
        let step = 0.25;
        let cnt = (2.0 * r / step).floor() as usize + 1;
        let xn: Vec<f64> = (0..cnt).map(|i| -r + i as f64 * step).collect();
        let mut sum = 0.0;
        let mut fnorm = 0.0;
        if d <= 2 {
            for chunk in xn.chunks(64) {
                let grid = XGrid { start: vec![-r; d], step, counts: vec![cnt; d], xn: chunk.to_vec() };
                let ge = evaluate_grid(phase, amp, lambda, f, &grid, opts)?;
                let pts = grid.points();
                let terms: Vec<f64> = ge.values.iter().zip(&pts).filter(|(_, x)| norm(x) <= r).map(|(v, _)| v.norm_sqr()).collect();
                sum += pairwise_sum(&terms);
                if fnorm == 0.0 {
                    let lat = OmegaLattice::ball(d, ge.lattice_spacing, &f.support().unwrap().0, f.support().unwrap().1);
                    fnorm = f.l2_norm(&lat)?;
                }
            }
        } else {
            return Err(Error::Parameter("hormander_ratio supports n <= 3".into()));
        }
        let l2 = (sum * step.powi(phase.n as i32)).sqrt();
        out.push((r, if fnorm > 0.0 { l2 / (r.sqrt() * fnorm) } else { 0.0 }));
    }
    Ok(out)
}

/// `‖T^λf(·, x_n)‖_{L²(ℝ^{n−1})} / ‖f‖₂` at each height (n = 2 or 3).
pub fn slab_ratio(
    phase: &PhaseSpec,
    amp: &AmplitudeSpec,
    lambda: f64,
    f: &InputFunction,
    heights: &[f64],
    half_width: f64,
    opts: &EvalOptions,
) -> Result<Vec<(f64, f64)>> {
    let d = phase.n - 1;
    let step = 0.25;
    let cnt = (2.0 * half_width / step).floor() as usize + 1;
    let mut out = Vec::new();
    for &t in heights {
        let grid = XGrid { start: vec![-half_width; d], step, counts: vec![cnt; d], xn: vec![t] };
        let ge = evaluate_grid(phase, amp, lambda, f, &grid, opts)?;
        let terms: Vec<f64> = ge.values.iter().map(|v| v.norm_sqr()).collect();
        let l2 = (pairwise_sum(&terms) * step.powi(d as i32)).sqrt();
        let ratio = match f.support() {
            Some((c, r)) => {
                let fl = f.l2_norm(&OmegaLattice::ball(d, ge.lattice_spacing, &c, r))?;
                if fl > 0.0 { l2 / fl } else { 0.0 }
            }
            None => 0.0,
        };
        out.push((t, ratio));
    }
    Ok(out)
}

/// Max of `||T f(x)| − |T f(y)||` over random pairs `|x − y| ≤ ρ/10` in `B(center, spread)`,
/// relative to the sampled sup.
#[allow(clippy::too_many_arguments)]
pub fn locally_constant_defect(
    phase: &PhaseSpec,
    amp: &AmplitudeSpec,
    lambda: f64,
    f: &InputFunction,
    center: &[f64],
    spread: f64,
    rho: f64,
    pairs: usize,
    seed: u64,
) -> Result<f64> {
    let n = phase.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::with_capacity(2 * pairs);
    for _ in 0..pairs {
        let x: Vec<f64> = center.iter().map(|c| c + spread * (2.0 * rng.random::<f64>() - 1.0)).collect();
        let dir: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let s = rho / 10.0 * rng.random::<f64>() / norm(&dir).max(1e-12);
        let y: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + s * b).collect();
        pts.push(x);
        pts.push(y);
    }
    let field = evaluate(phase, amp, lambda, f, &pts, &EvalOptions::default())?;
    let sup = field.max_abs();
    if sup == 0.0 {
        return Ok(0.0);
    }
    let worst = field.values.chunks(2).map(|c| (c[0].norm() - c[1].norm()).abs()).fold(0.0, f64::max);
    Ok(worst / sup)
}

/// `∫ e^{iλψ(z)} a(z) dz` with `a(z) = bump((z − c)/r)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscIntegral1d {
    pub psi: Poly,
    pub center: f64,
    pub radius: f64,
    #[serde(default)]
    pub zero_amplitude: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub lambdas: Vec<f64>,
    pub magnitudes: Vec<f64>,
    pub fit: Option<LinearFit>,
    pub m_bound: f64,
    pub lambda_eff: Vec<f64>,
    /// `max_λ |I(λ)| λ_eff^N / M^N`.
    pub constant: f64,
}

impl OscIntegral1d {
    pub fn integral(&self, lambda: f64) -> Complex64 {
        if self.zero_amplitude {
            return Complex64::new(0.0, 0.0);
        }
        let (a, b) = (self.center - self.radius, self.center + self.radius);
        integrate(
            |z| Complex64::from_polar(bump((z - self.center) / self.radius), lambda * self.psi.eval(&[z])),
            a,
            b,
            1e-17,
            40,
        )
    }
}

pub fn nonstationary_decay(spec: &OscIntegral1d, lambdas: &[f64], order: usize) -> Result<DecayReport> {
    if spec.psi.nvars() != 1 {
        return Err(Error::Parameter("phase must be univariate".into()));
    }
    if order < 1 {
        return Err(Error::Parameter("N must be >= 1".into()));
    }
    let samples: Vec<f64> = (0..=2000).map(|i| spec.center - spec.radius + 2.0 * spec.radius * i as f64 / 2000.0).collect();
    let d1 = spec.psi.deriv(0);
    let min_d1 = samples.iter().map(|z| d1.eval(&[*z]).abs()).fold(f64::INFINITY, f64::min);
    if !(min_d1 > 0.0) {
        return Err(Error::Precondition("lower bound |φ'| >= λ fails: φ' vanishes on the support".into()));
    }
    // ii) |φ^{(k)}| <= M |φ'|; the ratio is independent of λ.
    let mut m_phase: f64 = 1.0;
    let mut dk = d1.clone();
    for _ in 2..=order {
        dk = dk.deriv(0);
        for z in &samples {
            m_phase = m_phase.max(dk.eval(&[*z]).abs() / d1.eval(&[*z]).abs());
        }
    }
    // iii) |a^{(k)}| <= M^k.
    let mut m_amp: f64 = 1.0;
    if !spec.zero_amplitude {
        for z in &samples {
            let ds = bump_derivatives(*z, spec.center, spec.radius, order);
            for (k, v) in ds.iter().enumerate().skip(1) {
                m_amp = m_amp.max(v.abs().powf(1.0 / k as f64));
            }
        }
    }
    let m = m_phase.max(m_amp);
    let mut magnitudes = Vec::new();
    let mut lambda_eff = Vec::new();
    let mut constant: f64 = 0.0;
    for &l in lambdas {
        let le = l * min_d1;
        if le < 1.0 {
            return Err(Error::Precondition(format!("lower bound |φ'| >= 1 fails at λ = {}", l)));
        }
        let v = spec.integral(l).norm();
        constant = constant.max(v * le.powi(order as i32) / m.powi(order as i32));
        magnitudes.push(v);
        lambda_eff.push(le);
    }
    let fit = if magnitudes.iter().all(|v| *v > 0.0) && lambdas.len() >= 3 { Some(loglog_fit(lambdas, &magnitudes)?) } else { None };
    Ok(DecayReport { lambdas: lambdas.to_vec(), magnitudes, fit, m_bound: m, lambda_eff, constant })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amplitude::AmplitudeKind;

    #[test]
    fn lattice_ball_counts() {
        let l = OmegaLattice::ball(2, 0.1, &[0.0, 0.0], 1.0);
        assert!((l.len() as f64 * 0.01 - std::f64::consts::PI).abs() < 0.1);
        assert!(l.indices.contains(&vec![0, 0]));
    }

    #[test]
    fn zero_input_gives_zero_field() {
        let ph = PhaseSpec::paraboloid(2);
        let amp = AmplitudeSpec::constant_one(1.0);
        let f = InputFunction::Zero { dim: 1 };
        let fld = evaluate(&ph, &amp, 64.0, &f, &[vec![1.0, 2.0], vec![0.0, 30.0]], &EvalOptions::default()).unwrap();
        assert!(fld.values.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn origin_value_is_lattice_mass() {
        let ph = PhaseSpec::paraboloid(2);
        let amp = AmplitudeSpec::constant_one(1.0);
        let f = InputFunction::bump(vec![0.1], 0.3);
        let fld = evaluate(&ph, &amp, 64.0, &f, &[vec![0.0, 0.0]], &EvalOptions::default()).unwrap();
        let lat = OmegaLattice::ball(1, fld.lattice_spacing, &[0.1], 0.3);
        let mass: f64 = (0..lat.len()).map(|i| f.sample(&lat.point(i)).re).sum::<f64>() * lat.spacing;
        assert!((fld.values[0].re - mass).abs() < 1e-12 && fld.values[0].im.abs() < 1e-12);
    }

    #[test]
    fn coarse_lattice_is_rejected() {
        let ph = PhaseSpec::paraboloid(2);
        let amp = AmplitudeSpec::constant_one(1.0);
        let f = InputFunction::bump(vec![0.0], 0.5);
        let opts = EvalOptions { spacing: Some(0.1), ..Default::default() };
        let e = evaluate(&ph, &amp, 64.0, &f, &[vec![0.0, 32.0]], &opts).unwrap_err();
        assert!(matches!(e, Error::Resolution { .. }));
    }

    #[test]
    fn lp_of_constant_field() {
        let ps = PointSet::grid(Region::Box { lo: vec![0.0, 0.0], hi: vec![1.0, 2.0] }, 0.5).unwrap();
        let m = ps.points.len();
        let fld = SampledField { lambda: 1.0, points: ps, values: vec![Complex64::new(3.0, 0.0); m], lattice_spacing: 1.0 };
        let est = lp_norm(&fld, 2.0).unwrap();
        assert!((est.value - 3.0 * (m as f64 * 0.25).sqrt()).abs() < 1e-12);
        assert_eq!(lp_norm(&fld, f64::INFINITY).unwrap().value, 3.0);
        assert!(lp_norm(&fld, 0.5).is_err());
    }

    #[test]
    fn chirp_matches_direct_sum() {
        let c: Vec<Complex64> = (0..37).map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let mut pl = FftPlanner::new();
        let out = chirp_z(&c, -3.7, 0.31, 50, -0.2, 0.013, &mut pl);
        for j in [0usize, 7, 49] {
            let x = -3.7 + j as f64 * 0.31;
            let d: Complex64 = c.iter().enumerate().map(|(k, ck)| ck * cis_cycles(x * (-0.2 + k as f64 * 0.013))).sum();
            assert!((d - out[j]).norm() < 1e-10);
        }
    }

    #[test]
    fn fast_grid_matches_direct() {
        let ph = PhaseSpec::paraboloid(3);
        let amp = AmplitudeSpec::new(AmplitudeKind::TensorBump, 1.0, 1.0).unwrap();
        let f = InputFunction::bump(vec![0.1, -0.2], 0.4);
        let grid = XGrid { start: vec![-5.0, -4.0], step: 0.5, counts: vec![21, 17], xn: vec![0.0, 3.5] };
        let opts = EvalOptions { spacing: None, fast: FastMode::Audit };
        let ge = evaluate_grid(&ph, &amp, 16.0, &f, &grid, &opts).unwrap();
        assert!(ge.used_fast);
        assert!(ge.audit_error.unwrap() <= 1e-8);
    }
}
