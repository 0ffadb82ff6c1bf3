//! Transverse complete intersections, neighbourhoods, polynomial
//! partitioning, polynomial curves and tube–variety interactions.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dist, dot, norm};
use crate::phase::PhaseSpec;
use crate::poly::{x_names, Poly};
use crate::wavepacket::{core_curve, Tube};

/// `|p|(x) = Σ |c_α x^α|`, the natural scale for residuals of `p` at `x`.
fn abs_eval(p: &Poly, x: &[f64]) -> f64 {
    p.terms().map(|(e, c)| e.iter().zip(x).fold(c.abs(), |a, (&k, v)| a * v.abs().powi(k as i32))).sum()
}

fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    svd.pseudo_inverse(1e-13 * smax.max(1e-300)).unwrap_or_else(|_| DMatrix::zeros(m.ncols(), m.nrows()))
}

/// `Z(P_1, …, P_{n−m})`; no polynomials means the whole space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variety {
    pub n: usize,
    pub m: usize,
    pub polys: Vec<Poly>,
    pub degree: u32,
    /// Smallest `σ_min/σ_max` of the gradient matrix over the sampled zeros.
    pub rank_ratio: f64,
    pub sampled_zeros: usize,
}

/// JSON form: polynomial strings in `x1..xn` with named parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarietyDoc {
    pub n: usize,
    pub polys: Vec<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl VarietyDoc {
    pub fn parse(&self) -> Result<Vec<Poly>> {
        let names = x_names(self.n);
        let vars: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let params: Vec<(&str, f64)> = self.params.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        self.polys.iter().map(|s| Poly::parse(s, &vars, &params)).collect()
    }
}

/// Sample zeros, check the gradient rank at each, and build the variety.
pub fn make_tci(polys: Vec<Poly>, n: usize, sample_radius: f64, seed: u64) -> Result<Variety> {
    if polys.len() > n {
        return Err(Error::Construction(format!("{} polynomials in ℝ^{}", polys.len(), n)));
    }
    if polys.iter().any(|p| p.nvars() != n) {
        return Err(Error::Construction("polynomials must live in n variables".into()));
    }
    if polys.iter().any(|p| p.is_zero()) {
        return Err(Error::Construction("zero polynomial; use an empty list for the whole space".into()));
    }
    let degree = polys.iter().map(|p| p.degree()).max().unwrap_or(0);
    let mut z = Variety { n, m: n - polys.len(), polys, degree, rank_ratio: 1.0, sampled_zeros: 0 };
    if z.polys.is_empty() {
        return Ok(z);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = f64::INFINITY;
    let mut found = 0;
    for _ in 0..200 {
        let x: Vec<f64> = (0..n).map(|_| sample_radius * (2.0 * rng.random::<f64>() - 1.0)).collect();
        let Some(p) = z.project(&x) else { continue };
        found += 1;
        let g = z.gradients(&p);
        let sv = g.singular_values();
        let ratio = sv.min() / sv.max().max(1e-300);
        if !(ratio >= 1e-6) {
            return Err(Error::NotTci { witness: p });
        }
        worst = worst.min(ratio);
    }
    if found == 0 {
        return Err(Error::Construction("no zeros found near the sampling ball".into()));
    }
    z.rank_ratio = worst;
    z.sampled_zeros = found;
    Ok(z)
}

impl Variety {
    /// Without the sampled rank check of [`make_tci`].
    pub fn unchecked(polys: Vec<Poly>, n: usize) -> Self {
        let degree = polys.iter().map(|p| p.degree()).max().unwrap_or(0);
        Variety { n, m: n - polys.len().min(n), polys, degree, rank_ratio: f64::NAN, sampled_zeros: 0 }
    }

    pub fn whole_space(n: usize) -> Self {
        Variety { n, m: n, polys: Vec::new(), degree: 0, rank_ratio: 1.0, sampled_zeros: 0 }
    }

    pub fn is_whole_space(&self) -> bool {
        self.polys.is_empty()
    }

    pub fn values(&self, x: &[f64]) -> Vec<f64> {
        self.polys.iter().map(|p| p.eval(x)).collect()
    }

    /// Rows are `∇P_j(x)`.
    pub fn gradients(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.polys.len(), self.n, |j, i| self.polys[j].deriv(i).eval(x))
    }

    fn residual_ok(&self, x: &[f64]) -> bool {
        self.polys.iter().all(|p| p.eval(x).abs() <= 1e-11 * (1.0 + abs_eval(p, x)))
    }

    /// Gauss–Newton (minimum-norm steps) from `x` onto `Z`, capped at 50 steps.
    pub fn project(&self, x: &[f64]) -> Option<Vec<f64>> {
        if self.polys.is_empty() {
            return Some(x.to_vec());
        }
        let mut z = x.to_vec();
        for _ in 0..50 {
            if self.residual_ok(&z) {
                return Some(z);
            }
            let j = self.gradients(&z);
            let r = DVector::from_vec(self.values(&z));
            let step = pinv(&j) * r;
            for (a, s) in z.iter_mut().zip(step.iter()) {
                *a -= s;
            }
            if z.iter().any(|v| !v.is_finite()) {
                return None;
            }
        }
        self.residual_ok(&z).then_some(z)
    }

    /// `dist(x, Z)` via the projection, with the foot point.
    pub fn dist(&self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        self.project(x).map(|z| (dist(x, &z), z))
    }

    /// Angle in radians between the direction `u` and `T_z Z`.
    pub fn angle_to_tangent(&self, z: &[f64], u: &[f64]) -> f64 {
        if self.polys.is_empty() {
            return 0.0;
        }
        let g = self.gradients(z).transpose();
        let q = g.qr().q();
        let un = norm(u).max(1e-300);
        let comp = q.transpose() * DVector::from_row_slice(u);
        (comp.norm() / un).min(1.0).asin()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodCover {
    pub count: usize,
    /// `count / (R/ρ)^m`.
    pub c_d: f64,
    pub volume: f64,
    pub volume_std_error: f64,
    pub hits: usize,
    pub samples: usize,
    pub empty: bool,
}

/// Greedy ρ-net of the sampled `N_ρ(Z) ∩ B(0,R)` and its Monte-Carlo volume.
pub fn neighborhood_cover(z: &Variety, rho: f64, r: f64, samples: usize, seed: u64) -> Result<NeighborhoodCover> {
    if !(rho > 0.0 && rho <= r) {
        return Err(Error::Parameter(format!("need 0 < ρ <= R, got ρ = {}, R = {}", rho, r)));
    }
    let n = z.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::with_capacity(samples);
    while pts.len() < samples {
        let x: Vec<f64> = (0..n).map(|_| r * (2.0 * rng.random::<f64>() - 1.0)).collect();
        if norm(&x) <= r {
            pts.push(x);
        }
    }
    let inside: Vec<bool> = pts.par_iter().map(|x| z.dist(x).map(|(d, _)| d <= rho).unwrap_or(false)).collect();
    let hits: Vec<&Vec<f64>> = pts.iter().zip(&inside).filter(|(_, &b)| b).map(|(x, _)| x).collect();
    let ball = std::f64::consts::PI.powf(n as f64 / 2.0) / libm_gamma(n as f64 / 2.0 + 1.0) * r.powi(n as i32);
    let frac = hits.len() as f64 / samples as f64;
    let volume = ball * frac;
    let volume_std_error = ball * (frac * (1.0 - frac) / samples as f64).sqrt();
    let count = if hits.is_empty() {
        0
    } else if rho >= r {
        1
    } else {
        let mut centres: Vec<&Vec<f64>> = Vec::new();
        for x in &hits {
            if !centres.iter().any(|c| dist(c, x) <= rho) {
                centres.push(x);
            }
        }
        centres.len()
    };
    Ok(NeighborhoodCover {
        count,
        c_d: count as f64 / (r / rho).powi(z.m as i32),
        volume,
        volume_std_error,
        hits: hits.len(),
        samples,
        empty: hits.is_empty(),
    })
}

fn libm_gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

/// Polynomial map `t ↦ Σ c_k t^k` with a validity window and an error bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyCurve {
    /// `coeffs[k]` is the vector coefficient of `t^k`.
    pub coeffs: Vec<Vec<f64>>,
    pub interval: (f64, f64),
    pub error_bound: f64,
}

impl PolyCurve {
    pub fn line(p: &[f64], d: &[f64], interval: (f64, f64)) -> Self {
        PolyCurve { coeffs: vec![p.to_vec(), d.to_vec()], interval, error_bound: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.first().map(|c| c.len()).unwrap_or(0)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.iter().rposition(|c| c.iter().any(|v| *v != 0.0)).unwrap_or(0)
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for c in self.coeffs.iter().rev() {
            for (o, ci) in out.iter_mut().zip(c) {
                *o = *o * t + ci;
            }
        }
        out
    }

    pub fn derivative(&self) -> PolyCurve {
        let coeffs = if self.coeffs.len() <= 1 {
            vec![vec![0.0; self.dim()]]
        } else {
            self.coeffs[1..].iter().enumerate().map(|(k, c)| c.iter().map(|v| v * (k + 1) as f64).collect()).collect()
        };
        PolyCurve { coeffs, interval: self.interval, error_bound: 0.0 }
    }

    /// Sampled sup of `|Γ^{(k)}|` over `[a, b]`.
    pub fn sup_derivative(&self, k: usize, a: f64, b: f64) -> f64 {
        let mut d = self.clone();
        for _ in 0..k {
            d = d.derivative();
        }
        (0..=400).map(|i| norm(&d.eval(a + (b - a) * i as f64 / 400.0))).fold(0.0, f64::max)
    }
}

/// A curve with Taylor data at `t = 0`.
pub trait CurveSource {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64) -> Option<Vec<f64>>;
    /// `Γ^{(k)}(0)/k!` for `k = 0..=order`.
    fn taylor(&self, order: usize) -> Result<Vec<Vec<f64>>>;
    fn tangent(&self, t: f64) -> Option<Vec<f64>> {
        let h = 1e-4 * (1.0 + t.abs());
        let a = self.eval(t - h)?;
        let b = self.eval(t + h)?;
        Some(a.iter().zip(&b).map(|(x, y)| (y - x) / (2.0 * h)).collect())
    }
}

impl CurveSource for PolyCurve {
    fn dim(&self) -> usize {
        PolyCurve::dim(self)
    }

    fn eval(&self, t: f64) -> Option<Vec<f64>> {
        Some(PolyCurve::eval(self, t))
    }

    fn taylor(&self, order: usize) -> Result<Vec<Vec<f64>>> {
        Ok((0..=order).map(|k| self.coeffs.get(k).cloned().unwrap_or_else(|| vec![0.0; self.dim()])).collect())
    }

    fn tangent(&self, t: f64) -> Option<Vec<f64>> {
        Some(self.derivative().eval(t))
    }
}

/// `Γ^λ_{ω,v}(t) = (γ^λ_{ω,v}(t), t)` of a phase; Taylor data from a Chebyshev fit near 0.
pub struct CoreCurveSource<'a> {
    pub phase: &'a PhaseSpec,
    pub omega: Vec<f64>,
    pub v: Vec<f64>,
    pub lambda: f64,
}

impl CurveSource for CoreCurveSource<'_> {
    fn dim(&self) -> usize {
        self.phase.n
    }

    fn eval(&self, t: f64) -> Option<Vec<f64>> {
        let c = core_curve(self.phase, &self.omega, &self.v, self.lambda, &[t]).ok()?;
        c.gamma.into_iter().next().flatten().map(|mut g| {
            g.push(t);
            g
        })
    }

    fn taylor(&self, order: usize) -> Result<Vec<Vec<f64>>> {
        let tau = 0.05 * self.lambda;
        let deg = order + 6;
        let nodes = 4 * (deg + 1);
        let us: Vec<f64> = (0..nodes).map(|i| (std::f64::consts::PI * (i as f64 + 0.5) / nodes as f64).cos()).collect();
        let vals: Vec<Vec<f64>> = us
            .iter()
            .map(|u| self.eval(u * tau).ok_or_else(|| Error::Parameter("core curve undefined near t = 0".into())))
            .collect::<Result<_>>()?;
        let v = DMatrix::from_fn(nodes, deg + 1, |i, k| us[i].powi(k as i32));
        let vp = pinv(&v);
        let n = self.dim();
        let mut out = vec![vec![0.0; n]; order + 1];
        for j in 0..n {
            let y = DVector::from_iterator(nodes, vals.iter().map(|p| p[j]));
            let a = &vp * y;
            for (k, o) in out.iter_mut().enumerate() {
                o[j] = a[k] / tau.powi(k as i32);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaylorReport {
    pub curve: PolyCurve,
    pub order: usize,
    /// Max angle (radians) between the tangents of source and approximant.
    pub tangent_angle: f64,
}

/// Degree-`⌈1/(2ε)⌉` Taylor approximant on `|t| ≤ λ^{1−ε}` with measured error.
pub fn taylor_curve(src: &dyn CurveSource, eps: f64, lambda: f64) -> Result<TaylorReport> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Parameter(format!("ε must lie in (0,1), got {}", eps)));
    }
    let order = (1.0 / (2.0 * eps) - 1e-12).ceil() as usize;
    let coeffs = src.taylor(order)?;
    let w = lambda.powf(1.0 - eps);
    let mut curve = PolyCurve { coeffs, interval: (-w, w), error_bound: 0.0 };
    let mut err: f64 = 0.0;
    for i in 0..1000 {
        let t = -w + 2.0 * w * i as f64 / 999.0;
        if let Some(x) = src.eval(t) {
            err = err.max(dist(&x, &curve.eval(t)));
        }
    }
    curve.error_bound = err;
    let dc = curve.derivative();
    let mut angle: f64 = 0.0;
    for i in 0..100 {
        let t = -w + 2.0 * w * i as f64 / 99.0;
        if let Some(a) = src.tangent(t) {
            let b = dc.eval(t);
            let c = (dot(&a, &b) / (norm(&a) * norm(&b)).max(1e-300)).clamp(-1.0, 1.0);
            angle = angle.max(c.acos());
        }
    }
    Ok(TaylorReport { curve, order, tangent_angle: angle })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoneCover {
    pub centers: Vec<Vec<f64>>,
    pub radius: f64,
    /// `count / (deg Z · deg Γ)^n`.
    pub c_reported: f64,
    /// Sampled sup of `|Γ''|` on `(−2λ, 2λ)`.
    pub curvature: f64,
    pub zone_points: usize,
}

/// Greedy cover of the sampled set `Z_{>α,r,Γ} ∩ B(0,λ)` by balls of radius `r/α`.
pub fn transverse_zone(z: &Variety, curve: &PolyCurve, alpha: f64, r: f64, lambda: f64, c_bar: f64, seed: u64) -> Result<ZoneCover> {
    if !(r > 0.0 && r < lambda && alpha > 0.0) {
        return Err(Error::Parameter("need α > 0 and 0 < r < λ".into()));
    }
    let delta = curve.sup_derivative(2, -2.0 * lambda, 2.0 * lambda);
    if alpha < c_bar * delta * r {
        return Err(Error::Precondition(format!("α = {} < C̄·δ·r = {}", alpha, c_bar * delta * r)));
    }
    let n = z.n;
    let dc = curve.derivative();
    let steps = ((2.0 * lambda / (r / 2.0)).ceil() as usize).clamp(16, 20000);
    let ts: Vec<f64> = (0..=steps).map(|i| -lambda + 2.0 * lambda * i as f64 / steps as f64).collect();
    let zone: Vec<Vec<Vec<f64>>> = ts
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            let x = curve.eval(t);
            if norm(&x) > lambda + r || z.is_whole_space() {
                return Vec::new();
            }
            let tan = dc.eval(t);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9e3779b97f4a7c15));
            let mut out = Vec::new();
            for k in 0..9 {
                let start: Vec<f64> = if k == 0 { x.clone() } else { x.iter().map(|c| c + r * (2.0 * rng.random::<f64>() - 1.0)).collect() };
                if let Some(p) = z.project(&start) {
                    if dist(&p, &x) < r && norm(&p) <= lambda && z.angle_to_tangent(&p, &tan) > alpha {
                        out.push(p);
                    }
                }
            }
            out
        })
        .collect();
    let pts: Vec<Vec<f64>> = zone.into_iter().flatten().collect();
    let radius = r / alpha;
    let mut centers: Vec<Vec<f64>> = Vec::new();
    for p in &pts {
        if !centers.iter().any(|c| dist(c, p) <= radius) {
            centers.push(p.clone());
        }
    }
    let scale = ((z.degree.max(1) as usize * curve.degree().max(1)) as f64).powi(n as i32);
    Ok(ZoneCover { c_reported: centers.len() as f64 / scale, centers, radius, curvature: delta, zone_points: pts.len() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangencyWitness {
    pub x: Vec<f64>,
    pub z: Option<Vec<f64>>,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tangency {
    pub tangent: bool,
    pub witnesses: Vec<TangencyWitness>,
    pub max_distance: f64,
    pub max_angle: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangencyParams {
    pub c_tang: f64,
    pub big_c_tang: f64,
}

impl Default for TangencyParams {
    fn default() -> Self {
        TangencyParams { c_tang: 1.0, big_c_tang: 2.0 }
    }
}

/// Containment in `N_{R^{1/2+δ_m}}(Z)` and the angle condition at sampled pairs.
pub fn tangency_classify(phase: &PhaseSpec, tube: &Tube, z: &Variety, r: f64, delta_m: f64, params: TangencyParams) -> Result<Tangency> {
    let mut out = Tangency { tangent: true, witnesses: Vec::new(), max_distance: 0.0, max_angle: 0.0 };
    if z.is_whole_space() {
        return Ok(out);
    }
    let n = phase.n;
    let reach = r.powf(0.5 + delta_m);
    let window = params.big_c_tang * reach;
    let max_angle = params.c_tang * r.powf(-0.5 + delta_m);
    let mut samples = Vec::new();
    for c in tube.core_points() {
        samples.push(c.clone());
        for i in 0..n - 1 {
            for s in [-1.0, 1.0] {
                let mut x = c.clone();
                x[i] += s * tube.radius;
                samples.push(x);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x7a6e);
    for x in samples {
        match z.dist(&x) {
            Some((d, _)) => {
                out.max_distance = out.max_distance.max(d);
                if d > reach {
                    out.tangent = false;
                    out.witnesses.push(TangencyWitness { x: x.clone(), z: None, reason: format!("distance {:.3e} > {:.3e}", d, reach) });
                    continue;
                }
            }
            None => {
                out.tangent = false;
                out.witnesses.push(TangencyWitness { x: x.clone(), z: None, reason: "projection onto Z failed".into() });
                continue;
            }
        }
        let g = phase.gauss_map_lambda(&x, &tube.omega, tube.lambda)?;
        for k in 0..5 {
            let start: Vec<f64> = if k == 0 { x.clone() } else { x.iter().map(|c| c + window * (2.0 * rng.random::<f64>() - 1.0)).collect() };
            let Some(p) = z.project(&start) else { continue };
            if dist(&p, &x) > window {
                continue;
            }
            let a = z.angle_to_tangent(&p, &g);
            out.max_angle = out.max_angle.max(a);
            if a > max_angle {
                out.tangent = false;
                out.witnesses.push(TangencyWitness { x: x.clone(), z: Some(p), reason: format!("angle {:.3e} > {:.3e}", a, max_angle) });
            }
        }
    }
    Ok(out)
}

/// Real common zeros of two polynomials in a box, by Newton from a grid of starts.
pub fn real_intersections(p: &Poly, q: &Poly, lo: [f64; 2], hi: [f64; 2], grid: usize) -> Vec<[f64; 2]> {
    let (px, py, qx, qy) = (p.deriv(0), p.deriv(1), q.deriv(0), q.deriv(1));
    let mut roots: Vec<[f64; 2]> = Vec::new();
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    for i in 0..grid {
        for j in 0..grid {
            let mut x = [
                lo[0] + (hi[0] - lo[0]) * (i as f64 + 0.5) / grid as f64,
                lo[1] + (hi[1] - lo[1]) * (j as f64 + 0.5) / grid as f64,
            ];
            let mut ok = false;
            for _ in 0..60 {
                let f = [p.eval(&x), q.eval(&x)];
                if f[0].abs() <= 1e-12 * (1.0 + abs_eval(p, &x)) && f[1].abs() <= 1e-12 * (1.0 + abs_eval(q, &x)) {
                    ok = true;
                    break;
                }
                let a = [px.eval(&x), py.eval(&x), qx.eval(&x), qy.eval(&x)];
                let det = a[0] * a[3] - a[1] * a[2];
                if det.abs() < 1e-300 {
                    break;
                }
                x[0] -= (a[3] * f[0] - a[1] * f[1]) / det;
                x[1] -= (-a[2] * f[0] + a[0] * f[1]) / det;
                if !(x[0].is_finite() && x[1].is_finite()) || (x[0] - lo[0]).abs().max((x[1] - lo[1]).abs()) > 10.0 * span {
                    break;
                }
            }
            if ok && x[0] >= lo[0] && x[0] <= hi[0] && x[1] >= lo[1] && x[1] <= hi[1] && !roots.iter().any(|r| dist(r, &x) < 1e-6 * span) {
                roots.push(x);
            }
        }
    }
    roots
}

/// A surface `x_a = g(x_{−a})`, with `g` stored in box-normalised coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub axis: usize,
    pub step: usize,
    /// Polynomial in the `n − 1` normalised coordinates other than `axis`.
    pub g: Poly,
    #[serde(skip)]
    grad: Vec<Poly>,
}

impl Surface {
    fn new(axis: usize, step: usize, g: Poly) -> Self {
        let grad = (0..g.nvars()).map(|k| g.deriv(k)).collect();
        Surface { axis, step, g, grad }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub sample: Vec<f64>,
    pub signs: Vec<i8>,
    pub weight: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Default)]
struct CellGrid {
    counts: Vec<usize>,
    step: Vec<f64>,
    labels: Vec<u32>,
}

const WALL: u32 = u32::MAX;

/// Polynomial partition of a weighted point set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub n: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub surfaces: Vec<Surface>,
    /// One factor per bisection step, in original coordinates.
    pub factors: Vec<Poly>,
    pub degree: u32,
    pub steps: usize,
    pub wall_width: f64,
    pub cells: Vec<Cell>,
    pub wall_weight: f64,
    pub total_weight: f64,
    /// Cell of each input point, `None` for points in the wall.
    pub point_cells: Vec<Option<usize>>,
    #[serde(skip)]
    grid: CellGrid,
}

fn weighted_median(vals: &mut [(f64, f64)]) -> f64 {
    vals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let total: f64 = vals.iter().map(|v| v.1).sum();
    let mut acc = 0.0;
    for &(v, w) in vals.iter() {
        acc += w;
        if acc >= 0.5 * total {
            return v;
        }
    }
    vals.last().map(|v| v.0).unwrap_or(0.0)
}

fn monomials(nv: usize, deg: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    fn rec(nv: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == nv {
            out.push(cur.clone());
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(nv, left - k, cur, out);
            cur.pop();
        }
    }
    rec(nv, deg, &mut Vec::new(), &mut out);
    out.sort_by_key(|e| e.iter().sum::<u32>());
    out
}

impl Partition {
    fn normalise(&self, x: &[f64]) -> Vec<f64> {
        x.iter().enumerate().map(|(i, v)| (2.0 * v - self.lo[i] - self.hi[i]) / (self.hi[i] - self.lo[i])).collect()
    }

    fn others(x: &[f64], a: usize) -> Vec<f64> {
        x.iter().enumerate().filter(|(i, _)| *i != a).map(|(_, v)| *v).collect()
    }

    /// Signed value `u_a − g(u_{−a})` and an estimate of the Euclidean distance to the surface.
    fn surface_eval(&self, s: &Surface, x: &[f64]) -> (f64, f64) {
        let u = self.normalise(x);
        let o = Self::others(&u, s.axis);
        let gv = s.g.eval(&o);
        let half: Vec<f64> = self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (b - a)).collect();
        let ha = half[s.axis];
        let mut grad2 = 0.0;
        let mut k = 0;
        for (b, hb) in half.iter().enumerate() {
            if b == s.axis {
                continue;
            }
            let d = match s.grad.get(k) {
                Some(p) => p.eval(&o),
                None => s.g.deriv(k).eval(&o),
            } * ha
                / hb;
            grad2 += d * d;
            k += 1;
        }
        let val = u[s.axis] - gv;
        (val, (val * ha).abs() / (1.0 + grad2).sqrt())
    }

    pub fn in_wall(&self, x: &[f64]) -> bool {
        self.surfaces.iter().any(|s| self.surface_eval(s, x).1 < self.wall_width)
    }

    pub fn in_box(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| v >= a && v <= b)
    }

    pub fn signs(&self, x: &[f64]) -> Vec<i8> {
        self.surfaces.iter().map(|s| if self.surface_eval(s, x).0 >= 0.0 { 1 } else { -1 }).collect()
    }

    /// Cell containing `x`, or `None` in the wall or outside the box.
    pub fn cell_of(&self, x: &[f64]) -> Option<usize> {
        if !self.in_box(x) || self.in_wall(x) {
            return None;
        }
        let g = &self.grid;
        let idx: Vec<i64> = (0..self.n).map(|i| ((x[i] - self.lo[i]) / g.step[i]).round() as i64).collect();
        let mut best: Option<(f64, u32)> = None;
        let reach = 2i64;
        let span = (2 * reach + 1) as usize;
        for off in 0..span.pow(self.n as u32) {
            let mut rem = off;
            let mut lin = 0usize;
            let mut stride = 1usize;
            let mut d2 = 0.0;
            let mut valid = true;
            for i in 0..self.n {
                let o = (rem % span) as i64 - reach;
                rem /= span;
                let k = idx[i] + o;
                if k < 0 || k >= g.counts[i] as i64 {
                    valid = false;
                    break;
                }
                let c = self.lo[i] + k as f64 * g.step[i];
                d2 += (c - x[i]) * (c - x[i]);
                lin += k as usize * stride;
                stride *= g.counts[i];
            }
            if !valid {
                continue;
            }
            let l = g.labels[lin];
            if l != WALL && best.map(|b| d2 < b.0).unwrap_or(true) {
                best = Some((d2, l));
            }
        }
        best.map(|b| b.1 as usize)
    }

    pub fn nonempty_ratio(&self) -> f64 {
        let w: Vec<f64> = self.cells.iter().filter(|c| c.points > 0).map(|c| c.weight).collect();
        let mx = w.iter().cloned().fold(0.0, f64::max);
        let mn = w.iter().cloned().fold(f64::INFINITY, f64::min);
        if mn > 0.0 {
            mx / mn
        } else {
            f64::INFINITY
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for i in 1..=self.n {
            s.push_str(&format!("x{},", i));
        }
        s.push_str("weight,points\n");
        for c in &self.cells {
            for v in &c.sample {
                s.push_str(&format!("{:e},", v));
            }
            s.push_str(&format!("{:e},{}\n", c.weight, c.points));
        }
        s
    }
}

/// Iterated polynomial bisection.
///
/// Step `j` splits every current cell along axis `a = j mod n` (axes ordered by
/// extent). Cells sharing a slab along `a` are bisected by a single graph
/// `x_a = g(x_{−a})`, so every step contributes the product of one graph per slab.
pub fn partition(points: &[Vec<f64>], weights: &[f64], d: u32) -> Result<Partition> {
    if d < 1 {
        return Err(Error::Parameter("D must be >= 1".into()));
    }
    if points.is_empty() || points.len() != weights.len() {
        return Err(Error::Parameter("need a nonempty point set with one weight per point".into()));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Parameter("weights must be finite and nonnegative".into()));
    }
    let n = points[0].len();
    if n < 2 || points.iter().any(|p| p.len() != n) {
        return Err(Error::Parameter("points must share a dimension >= 2".into()));
    }
    let steps = ((n as f64 * (d as f64).log2()).ceil() as usize).max(1);
    if (1usize << steps.min(60)) > points.len() {
        return Err(Error::Parameter(format!("D = {} needs 2^{} cells but only {} points are given", d, steps, points.len())));
    }
    let mut lo: Vec<f64> = (0..n).map(|i| points.iter().map(|p| p[i]).fold(f64::INFINITY, f64::min)).collect();
    let mut hi: Vec<f64> = (0..n).map(|i| points.iter().map(|p| p[i]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let side = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max).max(1e-9);
    for i in 0..n {
        lo[i] -= 0.01 * side;
        hi[i] += 0.01 * side;
    }
    let mut part = Partition {
        n,
        lo,
        hi,
        surfaces: Vec::new(),
        factors: Vec::new(),
        degree: 0,
        steps,
        wall_width: 0.0,
        cells: Vec::new(),
        wall_weight: 0.0,
        total_weight: weights.iter().sum(),
        point_cells: Vec::new(),
        grid: CellGrid::default(),
    };
    let u: Vec<Vec<f64>> = points.iter().map(|p| part.normalise(p)).collect();
    let mut axes: Vec<usize> = (0..n).collect();
    axes.sort_by(|&a, &b| (part.hi[b] - part.lo[b]).partial_cmp(&(part.hi[a] - part.lo[a])).unwrap().then(a.cmp(&b)));
    let mut index = vec![vec![0usize; n]; points.len()];
    for step in 0..steps {
        let a = axes[step % n];
        let mut slabs: BTreeMap<usize, BTreeMap<Vec<usize>, Vec<usize>>> = BTreeMap::new();
        for (pid, idx) in index.iter().enumerate() {
            slabs.entry(idx[a]).or_default().entry(idx.clone()).or_default().push(pid);
        }
        for cells in slabs.values() {
            let groups: Vec<&Vec<usize>> = cells.values().filter(|g| g.iter().any(|&p| weights[p] > 0.0)).collect();
            if groups.is_empty() {
                continue;
            }
            let g = fit_bisector(&u, weights, a, &groups)?;
            part.surfaces.push(Surface::new(a, step, g));
        }
        let axis_surfaces: Vec<&Surface> = part.surfaces.iter().filter(|s| s.axis == a).collect();
        for (pid, p) in u.iter().enumerate() {
            let o = Partition::others(p, a);
            index[pid][a] = axis_surfaces.iter().filter(|s| p[a] > s.g.eval(&o)).count();
        }
    }
    part.build_factors()?;
    part.label_cells(points, weights);
    Ok(part)
}

/// Graph `u_a = g(u_{−a})` splitting each group in half by weight.
fn fit_bisector(u: &[Vec<f64>], w: &[f64], a: usize, groups: &[&Vec<usize>]) -> Result<Poly> {
    let n = u[0].len();
    let nv = n - 1;
    let k = groups.len();
    let mut deg = 0u32;
    while monomials(nv, deg).len() < k {
        deg += 1;
    }
    let mons = monomials(nv, deg);
    let mut targets: Vec<f64> = groups.iter().map(|g| weighted_median(&mut g.iter().map(|&p| (u[p][a], w[p])).collect::<Vec<_>>())).collect();
    // Weighted least squares over every point of the slab, each point aiming at its group level.
    let rows: Vec<(usize, usize)> = groups.iter().enumerate().flat_map(|(c, g)| g.iter().map(move |&p| (c, p))).collect();
    let v = DMatrix::from_fn(rows.len(), mons.len(), |i, j| {
        let (_, p) = rows[i];
        let o = Partition::others(&u[p], a);
        w[p].sqrt() * mons[j].iter().zip(&o).map(|(&e, x)| x.powi(e as i32)).product::<f64>()
    });
    let vp = pinv(&v);
    let build = |t: &[f64]| -> Poly {
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&(c, p)| w[p].sqrt() * t[c]));
        let c = &vp * y;
        let mut g = Poly::zero(nv);
        for (j, e) in mons.iter().enumerate() {
            g = &g + &Poly::monomial(nv, e.clone(), c[j]);
        }
        g
    };
    let others = |p: usize| Partition::others(&u[p], a);
    let mut g = build(&targets);
    let mut best = (f64::INFINITY, g.clone());
    for _ in 0..60 {
        let mut worst: f64 = 0.0;
        for (c, grp) in groups.iter().enumerate() {
            let mut r: Vec<(f64, f64)> = grp.iter().map(|&p| (u[p][a] - g.eval(&others(p)), w[p])).collect();
            let total: f64 = r.iter().map(|x| x.1).sum();
            let above: f64 = r.iter().filter(|x| x.0 > 0.0).map(|x| x.1).sum();
            let below: f64 = r.iter().filter(|x| x.0 < 0.0).map(|x| x.1).sum();
            let tol = (grp.len() as f64).powf(-0.5);
            worst = worst.max(((above - below).abs() / total.max(1e-300) - tol).max(0.0));
            targets[c] += weighted_median(&mut r);
        }
        if worst < best.0 {
            best = (worst, g.clone());
        }
        if worst == 0.0 {
            break;
        }
        g = build(&targets);
    }
    Ok(best.1)
}

impl Partition {
    fn build_factors(&mut self) -> Result<()> {
        let n = self.n;
        // u_i = (2x_i − lo_i − hi_i)/(hi_i − lo_i)
        let u: Vec<Poly> = (0..n)
            .map(|i| {
                let w = self.hi[i] - self.lo[i];
                &Poly::var(n, i).scale(2.0 / w) + &Poly::constant(n, -(self.lo[i] + self.hi[i]) / w)
            })
            .collect();
        let mut factors = Vec::new();
        for step in 0..self.steps {
            let mut f = Poly::constant(n, 1.0);
            for s in self.surfaces.iter().filter(|s| s.step == step) {
                let subs: Vec<Poly> = (0..n).filter(|&i| i != s.axis).map(|i| u[i].clone()).collect();
                let gx = s.g.compose(&subs)?;
                f = &f * &(&u[s.axis] - &gx);
            }
            factors.push(f);
        }
        self.degree = factors.iter().map(|f| f.degree()).sum();
        self.factors = factors;
        Ok(())
    }

    fn label_cells(&mut self, points: &[Vec<f64>], weights: &[f64]) {
        let n = self.n;
        let side: f64 = self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).fold(0.0, f64::max);
        let mut wall = 0.002 * side;
        let budget = 4.2e6_f64;
        let fine: Vec<usize> = self.lo.iter().zip(&self.hi).map(|(a, b)| ((b - a) / (wall / 4.0)).ceil() as usize + 1).collect();
        let total: f64 = fine.iter().map(|&c| c as f64).product();
        let shrink = if total > budget { (total / budget).powf(1.0 / n as f64) } else { 1.0 };
        let counts: Vec<usize> = fine.iter().map(|&c| ((c as f64 / shrink).floor() as usize).max(2)).collect();
        let step: Vec<f64> = (0..n).map(|i| (self.hi[i] - self.lo[i]) / (counts[i] - 1) as f64).collect();
        let max_step = step.iter().cloned().fold(0.0, f64::max);
        wall = wall.max(4.0 * max_step);
        self.wall_width = wall;
        let nodes: usize = counts.iter().product();
        // Surface tables over the grid of the other coordinates.
        let half: Vec<f64> = self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (b - a)).collect();
        let tables: Vec<(usize, Vec<(f64, f64)>)> = self
            .surfaces
            .par_iter()
            .map(|s| {
                let oc: Vec<usize> = (0..n).filter(|&i| i != s.axis).collect();
                let size: usize = oc.iter().map(|&i| counts[i]).product();
                let dg: Vec<Poly> = (0..n - 1).map(|k| s.g.deriv(k)).collect();
                let tab = (0..size)
                    .map(|lin| {
                        let mut rem = lin;
                        let o: Vec<f64> = oc
                            .iter()
                            .map(|&i| {
                                let k = rem % counts[i];
                                rem /= counts[i];
                                let x = self.lo[i] + k as f64 * step[i];
                                (2.0 * x - self.lo[i] - self.hi[i]) / (self.hi[i] - self.lo[i])
                            })
                            .collect();
                        let gv = s.g.eval(&o);
                        let mut grad2 = 0.0;
                        for (k, &i) in oc.iter().enumerate() {
                            let d = dg[k].eval(&o) * half[s.axis] / half[i];
                            grad2 += d * d;
                        }
                        // Surface position in x units and the normal scaling.
                        (self.lo[s.axis] + (gv + 1.0) * half[s.axis], (1.0 + grad2).sqrt())
                    })
                    .collect();
                (s.axis, tab)
            })
            .collect();
        let mut labels = vec![0u32; nodes];
        labels.par_iter_mut().enumerate().for_each(|(lin, l)| {
            let mut rem = lin;
            let k: Vec<usize> = counts
                .iter()
                .map(|&c| {
                    let v = rem % c;
                    rem /= c;
                    v
                })
                .collect();
            for (axis, tab) in &tables {
                let mut sub = 0;
                let mut stride = 1;
                for i in 0..n {
                    if i != *axis {
                        sub += k[i] * stride;
                        stride *= counts[i];
                    }
                }
                let (pos, nf) = tab[sub];
                let x = self.lo[*axis] + k[*axis] as f64 * step[*axis];
                if (x - pos).abs() / nf < wall {
                    *l = WALL;
                    return;
                }
            }
            *l = u32::MAX - 1;
        });
        // Flood fill over non-wall nodes.
        let unl = u32::MAX - 1;
        let mut strides = vec![1usize; n];
        for i in 1..n {
            strides[i] = strides[i - 1] * counts[i - 1];
        }
        let mut next = 0u32;
        let mut samples: Vec<usize> = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..nodes {
            if labels[start] != unl {
                continue;
            }
            labels[start] = next;
            samples.push(start);
            queue.push_back(start);
            while let Some(cur) = queue.pop_front() {
                for i in 0..n {
                    let ki = (cur / strides[i]) % counts[i];
                    if ki > 0 && labels[cur - strides[i]] == unl {
                        labels[cur - strides[i]] = next;
                        queue.push_back(cur - strides[i]);
                    }
                    if ki + 1 < counts[i] && labels[cur + strides[i]] == unl {
                        labels[cur + strides[i]] = next;
                        queue.push_back(cur + strides[i]);
                    }
                }
            }
            next += 1;
        }
        self.grid = CellGrid { counts: counts.clone(), step: step.clone(), labels };
        self.cells = samples
            .iter()
            .map(|&lin| {
                let x: Vec<f64> = (0..n).map(|i| self.lo[i] + ((lin / strides[i]) % counts[i]) as f64 * step[i]).collect();
                Cell { signs: self.signs(&x), sample: x, weight: 0.0, points: 0 }
            })
            .collect();
        let assign: Vec<Option<usize>> = points.par_iter().map(|p| self.cell_of(p)).collect();
        self.wall_weight = 0.0;
        for (a, w) in assign.iter().zip(weights) {
            match a {
                Some(c) => {
                    self.cells[*c].weight += w;
                    self.cells[*c].points += 1;
                }
                None => self.wall_weight += w,
            }
        }
        self.point_cells = assign;
    }
}

/// Distinct shrunken cells met by the curve, sampled at resolution `wall/4`.
pub fn tube_cell_incidence(curve: &PolyCurve, part: &Partition) -> usize {
    let (a, b) = curve.interval;
    let speed = curve.sup_derivative(1, a, b).max(1e-12) * 1.5;
    let h = part.wall_width / 4.0;
    let steps = (((b - a) * speed / h).ceil() as usize).clamp(1, 50_000_000);
    let mut seen = BTreeSet::new();
    for i in 0..=steps {
        let t = a + (b - a) * i as f64 / steps as f64;
        if let Some(c) = part.cell_of(&curve.eval(t)) {
            seen.insert(c);
        }
    }
    seen.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(n: usize, s: &str, l: f64) -> Poly {
        let names = x_names(n);
        let v: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        Poly::parse(s, &v, &[("l", l)]).unwrap()
    }

    #[test]
    fn hyperplane_and_model_variety_are_tci() {
        let z = make_tci(vec![parse(3, "x3", 1.0)], 3, 1.0, 1).unwrap();
        assert_eq!((z.m, z.degree), (2, 1));
        let z = make_tci(vec![parse(3, "l*x2 - x1*x3", 256.0)], 3, 256.0, 2).unwrap();
        assert_eq!((z.m, z.degree), (2, 2));
    }

    #[test]
    fn parallel_gradients_are_rejected() {
        let e = make_tci(vec![parse(2, "x1", 1.0), parse(2, "x1^2", 1.0)], 2, 1.0, 3).unwrap_err();
        assert!(matches!(e, Error::NotTci { .. }));
    }

    #[test]
    fn flat_cover_counts() {
        let z = make_tci(vec![parse(3, "x3", 1.0)], 3, 1.0, 1).unwrap();
        let c = neighborhood_cover(&z, 16.0, 256.0, 20000, 5).unwrap();
        assert!(c.count as f64 >= 256.0 / 8.0 && c.count as f64 <= 256.0 * 8.0, "count {}", c.count);
        let one = neighborhood_cover(&z, 256.0, 256.0, 2000, 5).unwrap();
        assert_eq!(one.count, 1);
    }

    #[test]
    fn median_line_for_collinear_points() {
        let pts: Vec<Vec<f64>> = (0..101).map(|i| vec![i as f64 / 100.0, 0.5 * i as f64 / 100.0 + 0.1]).collect();
        let w = vec![1.0; pts.len()];
        let p = partition(&pts, &w, 1).unwrap();
        let nonempty: Vec<&Cell> = p.cells.iter().filter(|c| c.points > 0).collect();
        assert_eq!(nonempty.len(), 2);
        for c in nonempty {
            assert!((c.weight - 50.5).abs() <= 1.5, "weight {}", c.weight);
        }
        assert!((p.cells.iter().map(|c| c.weight).sum::<f64>() + p.wall_weight - 101.0).abs() < 1e-9);
    }

    #[test]
    fn line_taylor_is_exact() {
        let l = PolyCurve::line(&[1.0, 2.0, 0.0], &[0.5, -0.25, 1.0], (-10.0, 10.0));
        let r = taylor_curve(&l, 0.25, 256.0).unwrap();
        assert_eq!(r.curve.error_bound, 0.0);
    }

    #[test]
    fn bezout_for_circle_and_line() {
        let c = parse(2, "x1^2 + x2^2 - 1", 1.0);
        let l = parse(2, "x1 - 0.3", 1.0);
        assert_eq!(real_intersections(&c, &l, [-2.0, -2.0], [2.0, 2.0], 10).len(), 2);
    }
}
