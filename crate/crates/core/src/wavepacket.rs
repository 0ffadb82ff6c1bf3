//! Scale-R wave packets: caps, the `η̂_v` convolution, core curves, tubes
//! and the regrouping of packets at a smaller scale ρ.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::amplitude::AmplitudeSpec;
use crate::error::{Error, Result};
use crate::field::{evaluate, EvalOptions, InputFunction, OmegaLattice};
use crate::numerics::{bump, cis_cycles, dist, dot, norm, pairwise_sum, plateau};
use crate::phase::PhaseSpec;

/// Cap centre spacing in units of `R^{-1/2}`.
const CAP_SPACING_1D: f64 = 0.8;
const CAP_SPACING_2D: f64 = 0.6;
/// `ψ` profile: plateau on `[0, 0.45]`, support `0.5` (units of `R^{-1/2}`).
const PSI_INNER: f64 = 0.45;
const PSI_OUTER: f64 = 0.5;
/// `ψ̃ ≡ 1` on the `R^{-1/2}/4`-neighbourhood of `supp ψ`.
const TILDE_INNER: f64 = PSI_OUTER + 0.25;
const TILDE_OUTER: f64 = 1.0;
const ETA_FACTOR: f64 = 0.9;

/// Geometry of the scale-R decomposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PacketScale {
    pub dim: usize,
    pub r: f64,
    pub delta: f64,
    /// Spacing of the v-lattice, `≈ R^{(1+δ)/2}`.
    pub s: f64,
    /// ω-lattice spacing; `1/(m·s)`.
    pub spacing: f64,
    /// Number of v-lattice points per period of the ω-lattice dual.
    pub m: usize,
    pub eta_radius: f64,
}

impl PacketScale {
    /// Scale with lattice spacing at most `target_spacing`.
    pub fn new(dim: usize, r: f64, delta: f64, target_spacing: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 0.25) {
            return Err(Error::Parameter(format!("δ must lie in (0, 1/4], got {}", delta)));
        }
        if !(r >= 4.0) {
            return Err(Error::Parameter(format!("scale R must be >= 4, got {}", r)));
        }
        if dim == 0 {
            return Err(Error::Parameter("dimension must be positive".into()));
        }
        let s = r.powf((1.0 + delta) / 2.0);
        let m = ((1.0 / (target_spacing * s)).ceil() as usize).max(2);
        Ok(Self::with_m(dim, r, delta, s, m))
    }

    /// Scale matched to an existing lattice spacing.
    pub fn for_spacing(dim: usize, r: f64, delta: f64, spacing: f64) -> Result<Self> {
        let base = Self::new(dim, r, delta, spacing)?;
        let m = (1.0 / (spacing * base.s)).round() as usize;
        if m < 2 {
            return Err(Error::Resolution { spacing, required_spacing: 1.0 / (2.0 * base.s), required_points: 0 });
        }
        let s = 1.0 / (m as f64 * spacing);
        Ok(Self::with_m(dim, r, delta, s, m))
    }

    fn with_m(dim: usize, r: f64, delta: f64, s: f64, m: usize) -> Self {
        let eta_radius = ETA_FACTOR * (1.0 / s).min((TILDE_INNER - PSI_OUTER) * r.powf(-0.5));
        PacketScale { dim, r, delta, s, spacing: 1.0 / (m as f64 * s), m, eta_radius }
    }

    pub fn cap_radius(&self) -> f64 {
        self.r.powf(-0.5)
    }

    pub fn tube_radius(&self) -> f64 {
        self.r.powf(0.5 + self.delta)
    }

    pub fn cap_spacing(&self) -> f64 {
        (if self.dim == 1 { CAP_SPACING_1D } else { CAP_SPACING_2D }) * self.cap_radius()
    }

    pub fn cap_center(&self, theta: &[i64]) -> Vec<f64> {
        theta.iter().map(|&k| k as f64 * self.cap_spacing()).collect()
    }

    /// Nearest cap index to ω.
    pub fn nearest_cap(&self, w: &[f64]) -> Vec<i64> {
        w.iter().map(|v| (v / self.cap_spacing()).round() as i64).collect()
    }

    /// Caps whose `ψ` support meets `B(c, r)`.
    pub fn caps_meeting(&self, c: &[f64], r: f64) -> Vec<Vec<i64>> {
        let reach = r + PSI_OUTER * self.cap_radius();
        OmegaLattice::ball(self.dim, self.cap_spacing(), c, reach)
            .indices
            .into_iter()
            .filter(|k| dist(&self.cap_center(k), c) < reach)
            .collect()
    }

    fn bump_raw(&self, theta: &[i64], w: &[f64]) -> f64 {
        let a = self.cap_radius();
        plateau(dist(w, &self.cap_center(theta)), PSI_INNER * a, PSI_OUTER * a)
    }

    /// `ψ_θ(ω)`, normalised over the full cap lattice.
    pub fn psi(&self, theta: &[i64], w: &[f64]) -> f64 {
        let b = self.bump_raw(theta, w);
        if b == 0.0 {
            return 0.0;
        }
        let total: f64 = self.caps_meeting(w, 0.0).iter().map(|t| self.bump_raw(t, w)).sum();
        b / total
    }

    pub fn psi_tilde(&self, theta: &[i64], w: &[f64]) -> f64 {
        let a = self.cap_radius();
        plateau(dist(w, &self.cap_center(theta)), TILDE_INNER * a, TILDE_OUTER * a)
    }

    /// `η̂(ξ)`, compactly supported with `η̂(0) = s^d`, so `Σ_v η(· − v) ≡ 1`.
    pub fn eta_hat(&self, xi: &[f64]) -> f64 {
        self.s.powi(self.dim as i32) * std::f64::consts::E * bump(norm(xi) / self.eta_radius)
    }

    /// v-lattice indices `j ∈ (−m/2, m/2]^d`.
    pub fn v_indices(&self) -> Vec<Vec<i64>> {
        let lo = -((self.m as i64 - 1) / 2);
        let span = self.m as i64;
        let total = self.m.pow(self.dim as u32);
        (0..total)
            .map(|i| {
                let mut rem = i as i64;
                (0..self.dim)
                    .map(|_| {
                        let c = rem % span;
                        rem /= span;
                        lo + c
                    })
                    .collect()
            })
            .collect()
    }

    pub fn v_of(&self, j: &[i64]) -> Vec<f64> {
        j.iter().map(|&k| k as f64 * self.s).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WavePacket {
    pub theta: Vec<i64>,
    pub omega_theta: Vec<f64>,
    pub v_index: Vec<i64>,
    pub v: Vec<f64>,
    pub r: f64,
    pub delta: f64,
    pub spacing: f64,
    pub indices: Vec<Vec<i64>>,
    pub values: Vec<Complex64>,
}

impl WavePacket {
    pub fn l2_norm(&self) -> f64 {
        let s: Vec<f64> = self.values.iter().map(|v| v.norm_sqr()).collect();
        (pairwise_sum(&s) * self.spacing.powi(self.omega_theta.len() as i32)).sqrt()
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn input(&self) -> InputFunction {
        InputFunction::Lattice {
            dim: self.omega_theta.len(),
            spacing: self.spacing,
            indices: self.indices.clone(),
            values: self.values.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub scale: PacketScale,
    pub packets: Vec<WavePacket>,
    /// `‖f − Σ f_{θ,v}‖_∞` on the lattice.
    pub residual: f64,
    /// `Σ‖f_{θ,v}‖₂² / ‖f‖₂²`.
    pub orthogonality_defect: f64,
    pub f_norm: f64,
    /// `max |Σ_θ ψ_θ − 1|` on the unit ball.
    pub partition_defect: f64,
}

fn lattice_map(indices: &[Vec<i64>], values: &[Complex64]) -> HashMap<Vec<i64>, Complex64> {
    let mut m = HashMap::with_capacity(indices.len());
    for (k, v) in indices.iter().zip(values) {
        *m.entry(k.clone()).or_insert(Complex64::new(0.0, 0.0)) += v;
    }
    m
}

impl Decomposition {
    /// `‖Σ_S f_{θ,v}‖₂² / Σ_S ‖f_{θ,v}‖₂²` for a subfamily.
    pub fn subfamily_ratio(&self, subset: &[usize]) -> f64 {
        let mut acc: HashMap<Vec<i64>, Complex64> = HashMap::new();
        let mut separate = 0.0;
        for &i in subset {
            let p = &self.packets[i];
            separate += p.l2_norm().powi(2);
            for (k, v) in p.indices.iter().zip(&p.values) {
                *acc.entry(k.clone()).or_insert(Complex64::new(0.0, 0.0)) += v;
            }
        }
        let mut sq: Vec<(Vec<i64>, f64)> = acc.into_iter().map(|(k, v)| (k, v.norm_sqr())).collect();
        sq.sort_by(|a, b| a.0.cmp(&b.0));
        let terms: Vec<f64> = sq.into_iter().map(|(_, v)| v).collect();
        let joint = pairwise_sum(&terms) * self.scale.spacing.powi(self.scale.dim as i32);
        if separate > 0.0 {
            joint / separate
        } else {
            0.0
        }
    }

    /// `Σ f_{θ,v}` over a subfamily as a lattice input.
    pub fn sum_input(&self, subset: &[usize]) -> InputFunction {
        let mut acc: BTreeMap<Vec<i64>, Complex64> = BTreeMap::new();
        for &i in subset {
            let p = &self.packets[i];
            for (k, v) in p.indices.iter().zip(&p.values) {
                *acc.entry(k.clone()).or_insert(Complex64::new(0.0, 0.0)) += v;
            }
        }
        let (indices, values): (Vec<_>, Vec<_>) = acc.into_iter().unzip();
        InputFunction::Lattice { dim: self.scale.dim, spacing: self.scale.spacing, indices, values }
    }

    /// Index of the packet with the largest `L²` norm.
    pub fn dominant(&self) -> Option<usize> {
        (0..self.packets.len()).max_by(|&a, &b| self.packets[a].l2_norm().partial_cmp(&self.packets[b].l2_norm()).unwrap())
    }

    /// CSV rows `theta, v, norm, t_start, t_end`.
    pub fn summary_csv(&self, phase: &PhaseSpec, lambda: f64) -> String {
        let mut s = String::from("theta,v,norm,t_start,t_end\n");
        for p in &self.packets {
            let t: Vec<f64> = (0..=64).map(|i| -lambda * phase.x_radius + 2.0 * lambda * phase.x_radius * i as f64 / 64.0).collect();
            let iv = core_curve(phase, &p.omega_theta, &p.v, lambda, &t).ok().and_then(|c| c.interval);
            let (a, b) = iv.map(|(a, b)| (format!("{:e}", a), format!("{:e}", b))).unwrap_or_default();
            let th: Vec<String> = p.theta.iter().map(|k| k.to_string()).collect();
            let v: Vec<String> = p.v.iter().map(|x| format!("{:e}", x)).collect();
            s.push_str(&format!("{},{},{:e},{},{}\n", th.join(" "), v.join(" "), p.l2_norm(), a, b));
        }
        s
    }
}

/// Decompose `f` at scale `R` on a lattice fine enough to evaluate `T^λ f_{θ,v}` on `B(0, λ)`.
pub fn decompose(f: &InputFunction, r: f64, delta: f64, lambda: f64) -> Result<Decomposition> {
    if r > lambda {
        return Err(Error::Parameter(format!("scale R = {} exceeds λ = {}", r, lambda)));
    }
    let dim = f.dim();
    let scale = match f {
        InputFunction::Lattice { spacing, .. } => PacketScale::for_spacing(dim, r, delta, *spacing)?,
        _ => PacketScale::new(dim, r, delta, 1.0 / (2.5 * lambda))?,
    };
    decompose_at(f, &scale)
}

pub fn decompose_at(f: &InputFunction, scale: &PacketScale) -> Result<Decomposition> {
    f.validate()?;
    let d = scale.dim;
    if f.dim() != d {
        return Err(Error::Parameter("input dimension does not match the scale".into()));
    }
    let h = scale.spacing;
    let unit = OmegaLattice::ball(d, h, &vec![0.0; d], 1.0);
    let fv = f.on_lattice(&unit)?;
    let f_norm = (pairwise_sum(&fv.iter().map(|v| v.norm_sqr()).collect::<Vec<_>>()) * unit.cell_volume()).sqrt();
    let fmap: HashMap<Vec<i64>, Complex64> = unit.indices.iter().cloned().zip(fv.iter().copied()).collect();
    let caps = scale.caps_meeting(&vec![0.0; d], 1.0);

    let partition_defect = unit
        .indices
        .par_iter()
        .map(|k| {
            let w: Vec<f64> = k.iter().map(|&i| i as f64 * h).collect();
            let s: f64 = scale.caps_meeting(&w, 0.0).iter().filter(|t| caps.contains(t)).map(|t| scale.psi(t, &w)).sum();
            (s - 1.0).abs()
        })
        .reduce(|| 0.0, f64::max);

    if f_norm == 0.0 {
        return Ok(Decomposition { scale: scale.clone(), packets: Vec::new(), residual: 0.0, orthogonality_defect: 0.0, f_norm, partition_defect });
    }
    let threshold = 1e-13 * f_norm;
    let a = scale.cap_radius();
    let m = scale.m;
    let md = m.pow(d as u32);
    let vidx = scale.v_indices();
    // Kernel offsets k with |k h| < r_η, weights η̂(kh)·h^d.
    let kern = OmegaLattice::ball(d, h, &vec![0.0; d], scale.eta_radius);
    let kw: Vec<f64> = (0..kern.len()).map(|i| scale.eta_hat(&kern.point(i)) * kern.cell_volume()).collect();

    let packets: Vec<Vec<WavePacket>> = caps
        .par_iter()
        .map(|theta| {
            let wc = scale.cap_center(theta);
            let src = OmegaLattice::ball(d, h, &wc, PSI_OUTER * a);
            let g: HashMap<Vec<i64>, Complex64> = src
                .indices
                .iter()
                .filter_map(|k| {
                    let fk = fmap.get(k).copied().unwrap_or_default();
                    let w: Vec<f64> = k.iter().map(|&i| i as f64 * h).collect();
                    let p = scale.psi(theta, &w);
                    (p != 0.0 && fk.norm() > 0.0).then(|| (k.clone(), fk * p))
                })
                .collect();
            if g.is_empty() {
                return Vec::new();
            }
            let out = OmegaLattice::ball(d, h, &wc, PSI_OUTER * a + scale.eta_radius);
            // A_q[r] = Σ_{k ≡ r mod m} K(k) g(q − k); then g_v(q) = Σ_r A_q[r] e^{−2πi⟨j, r⟩/m}.
            let mut planner = FftPlanner::<f64>::new();
            let fft = planner.plan_fft_forward(m);
            let mut vals: Vec<Vec<Complex64>> = vec![Vec::with_capacity(out.len()); md];
            for q in &out.indices {
                let mut acc = vec![Complex64::new(0.0, 0.0); md];
                for (kk, wk) in kern.indices.iter().zip(&kw) {
                    let src_k: Vec<i64> = q.iter().zip(kk).map(|(a, b)| a - b).collect();
                    if let Some(gv) = g.get(&src_k) {
                        let mut slot = 0;
                        let mut stride = 1;
                        for &c in kk {
                            slot += c.rem_euclid(m as i64) as usize * stride;
                            stride *= m;
                        }
                        acc[slot] += gv * *wk;
                    }
                }
                // d-dimensional DFT, axis by axis.
                let mut stride = 1;
                for _ in 0..d {
                    let block = stride * m;
                    for base in (0..md).step_by(block) {
                        for off in 0..stride {
                            let mut line: Vec<Complex64> = (0..m).map(|r| acc[base + off + r * stride]).collect();
                            fft.process(&mut line);
                            for (r, v) in line.into_iter().enumerate() {
                                acc[base + off + r * stride] = v;
                            }
                        }
                    }
                    stride = block;
                }
                let w: Vec<f64> = q.iter().map(|&i| i as f64 * h).collect();
                let tilde = scale.psi_tilde(theta, &w);
                for (jv, j) in vidx.iter().enumerate() {
                    let mut slot = 0;
                    let mut st = 1;
                    for &c in j {
                        slot += c.rem_euclid(m as i64) as usize * st;
                        st *= m;
                    }
                    vals[jv].push(acc[slot] * tilde);
                }
            }
            vidx.iter()
                .zip(vals)
                .filter(|(_, v)| v.iter().any(|z| z.norm() > threshold))
                .map(|(j, values)| WavePacket {
                    theta: theta.clone(),
                    omega_theta: wc.clone(),
                    v_index: j.clone(),
                    v: scale.v_of(j),
                    r: scale.r,
                    delta: scale.delta,
                    spacing: h,
                    indices: out.indices.clone(),
                    values,
                })
                .collect()
        })
        .collect();
    let packets: Vec<WavePacket> = packets.into_iter().flatten().collect();

    let mut sum: HashMap<Vec<i64>, Complex64> = HashMap::new();
    for p in &packets {
        for (k, v) in lattice_map(&p.indices, &p.values) {
            *sum.entry(k).or_insert(Complex64::new(0.0, 0.0)) += v;
        }
    }
    let mut residual: f64 = 0.0;
    for (k, v) in &fmap {
        residual = residual.max((v - sum.get(k).copied().unwrap_or_default()).norm());
    }
    for (k, v) in &sum {
        if !fmap.contains_key(k) {
            residual = residual.max(v.norm());
        }
    }
    let energy: f64 = packets.iter().map(|p| p.l2_norm().powi(2)).sum();
    Ok(Decomposition {
        scale: scale.clone(),
        packets,
        residual,
        orthogonality_defect: energy / (f_norm * f_norm),
        f_norm,
        partition_defect,
    })
}

/// Samples of `γ^λ_{θ,v}` solving `∂_ωφ^λ(γ(t), t; ω_θ) = v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoreCurve {
    pub t: Vec<f64>,
    /// `None` where no admissible solution exists.
    pub gamma: Vec<Option<Vec<f64>>>,
    /// Endpoints of the solvable range containing the first solvable sample.
    pub interval: Option<(f64, f64)>,
    pub max_residual: f64,
}

fn solve_gamma(phase: &PhaseSpec, w: &[f64], v: &[f64], lambda: f64, t: f64, guess: &[f64]) -> Option<Vec<f64>> {
    let target: Vec<f64> = v.iter().map(|c| c / lambda).collect();
    let g: Vec<f64> = guess.iter().map(|c| c / lambda).collect();
    let y = phase.solve_x_prime(t / lambda, w, &target, &g).ok()?;
    let mut x = y.clone();
    x.push(t / lambda);
    if norm(&x) > phase.x_radius * (1.0 + 1e-12) {
        return None;
    }
    Some(y.iter().map(|c| c * lambda).collect())
}

pub fn core_curve(phase: &PhaseSpec, omega: &[f64], v: &[f64], lambda: f64, t_grid: &[f64]) -> Result<CoreCurve> {
    let d = phase.n - 1;
    if omega.len() != d || v.len() != d {
        return Err(Error::Parameter("ω and v must have dimension n − 1".into()));
    }
    let mut gamma = Vec::with_capacity(t_grid.len());
    let mut guess = vec![0.0; d];
    let mut max_residual: f64 = 0.0;
    for &t in t_grid {
        let sol = solve_gamma(phase, omega, v, lambda, t, &guess).or_else(|| solve_gamma(phase, omega, v, lambda, t, &vec![0.0; d]));
        if let Some(g) = &sol {
            let mut x = g.clone();
            x.push(t);
            let res: Vec<f64> = phase.grad_omega_lambda(&x, omega, lambda).iter().zip(v).map(|(a, b)| a - b).collect();
            max_residual = max_residual.max(norm(&res));
            guess = g.clone();
        }
        gamma.push(sol);
    }
    let first = gamma.iter().position(|g| g.is_some());
    let interval = match first {
        None => None,
        Some(i0) => {
            let mut i1 = i0;
            while i1 + 1 < gamma.len() && gamma[i1 + 1].is_some() {
                i1 += 1;
            }
            let solvable = |t: f64, g: &[f64]| solve_gamma(phase, omega, v, lambda, t, g).is_some();
            let refine = |mut good: f64, mut bad: f64, g: &[f64]| {
                for _ in 0..50 {
                    let mid = 0.5 * (good + bad);
                    if solvable(mid, g) {
                        good = mid;
                    } else {
                        bad = mid;
                    }
                }
                good
            };
            let a = if i0 > 0 { refine(t_grid[i0], t_grid[i0 - 1], gamma[i0].as_ref().unwrap()) } else { t_grid[i0] };
            let b = if i1 + 1 < gamma.len() { refine(t_grid[i1], t_grid[i1 + 1], gamma[i1].as_ref().unwrap()) } else { t_grid[i1] };
            Some((a, b))
        }
    };
    if max_residual > 1e-8 * lambda {
        return Err(Error::RootFinding(format!("core curve residual {:e} exceeds 1e-8·λ", max_residual)));
    }
    Ok(CoreCurve { t: t_grid.to_vec(), gamma, interval, max_residual })
}

/// `Γ'(t) = (γ'(t), 1)` from implicit differentiation of the defining equation.
pub fn curve_tangent(phase: &PhaseSpec, omega: &[f64], gamma: &[f64], t: f64, lambda: f64) -> Result<Vec<f64>> {
    let n = phase.n;
    let mut x: Vec<f64> = gamma.iter().map(|c| c / lambda).collect();
    x.push(t / lambda);
    let mx = phase.mixed(&x, omega);
    let jac = mx.rows(0, n - 1).transpose();
    let rhs = DVector::from_iterator(n - 1, (0..n - 1).map(|j| -mx[(n - 1, j)]));
    let gp = jac.lu().solve(&rhs).ok_or_else(|| Error::Singular { x: x.clone(), omega: omega.to_vec() })?;
    let mut out: Vec<f64> = gp.iter().copied().collect();
    out.push(1.0);
    Ok(out)
}

/// Max angle in radians between `Γ'` and `±G^λ` along the sampled curve.
pub fn tangent_alignment(phase: &PhaseSpec, omega: &[f64], curve: &CoreCurve, lambda: f64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (t, g) in curve.t.iter().zip(&curve.gamma) {
        let Some(g) = g else { continue };
        let tan = curve_tangent(phase, omega, g, *t, lambda)?;
        let mut x = g.clone();
        x.push(*t);
        let gm = phase.gauss_map_lambda(&x, omega, lambda)?;
        let c = (dot(&tan, &gm) / norm(&tan)).abs().min(1.0);
        worst = worst.max(c.acos());
    }
    Ok(worst)
}

/// Curved tube of radius `R^{1/2+δ}` about a core curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tube {
    pub theta: Vec<i64>,
    pub v_index: Vec<i64>,
    pub omega: Vec<f64>,
    pub v: Vec<f64>,
    pub core: CoreCurve,
    pub radius: f64,
    pub lambda: f64,
    pub r: f64,
}

impl Tube {
    pub fn new(phase: &PhaseSpec, packet: &WavePacket, lambda: f64, samples: usize) -> Result<Self> {
        let r = packet.r;
        let t: Vec<f64> = (0..samples).map(|i| -r + 2.0 * r * i as f64 / (samples.max(2) - 1) as f64).collect();
        let core = core_curve(phase, &packet.omega_theta, &packet.v, lambda, &t)?;
        Ok(Tube {
            theta: packet.theta.clone(),
            v_index: packet.v_index.clone(),
            omega: packet.omega_theta.clone(),
            v: packet.v.clone(),
            core,
            radius: r.powf(0.5 + packet.delta),
            lambda,
            r,
        })
    }

    /// `|x' − γ(x_n)|`, or `None` when `x_n` lies outside the curve's domain.
    pub fn offset(&self, phase: &PhaseSpec, x: &[f64]) -> Option<f64> {
        let n = x.len();
        let guess = self
            .core
            .t
            .iter()
            .zip(&self.core.gamma)
            .filter_map(|(t, g)| g.as_ref().map(|g| ((t - x[n - 1]).abs(), g)))
            .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
            .map(|(_, g)| g.clone())
            .unwrap_or(vec![0.0; n - 1]);
        let g = solve_gamma(phase, &self.omega, &self.v, self.lambda, x[n - 1], &guess)?;
        Some(dist(&x[..n - 1], &g))
    }

    pub fn core_points(&self) -> Vec<Vec<f64>> {
        self.core
            .t
            .iter()
            .zip(&self.core.gamma)
            .filter_map(|(t, g)| {
                g.as_ref().map(|g| {
                    let mut x = g.clone();
                    x.push(*t);
                    x
                })
            })
            .collect()
    }
}

/// `max_{exterior} |T^λ f_{θ,v}| / max_{core} |T^λ f_{θ,v}|`.
pub fn concentration_profile(
    phase: &PhaseSpec,
    amp: &AmplitudeSpec,
    lambda: f64,
    packet: &WavePacket,
    tube: &Tube,
    exterior: &[Vec<f64>],
) -> Result<f64> {
    if exterior.is_empty() {
        return Err(Error::Parameter("no exterior points".into()));
    }
    for x in exterior {
        match tube.offset(phase, x) {
            Some(o) if o < 2.0 * tube.radius => {
                return Err(Error::Parameter(format!("point {:?} lies inside the doubled tube", x)));
            }
            _ => {}
        }
    }
    let core: Vec<Vec<f64>> = tube.core_points().into_iter().filter(|x| norm(x) <= tube.r).collect();
    if core.is_empty() {
        return Err(Error::Parameter("tube core misses B(0,R)".into()));
    }
    let f = packet.input();
    let opts = EvalOptions::default();
    let inner = evaluate(phase, amp, lambda, &f, &core, &opts)?.max_abs();
    let outer = evaluate(phase, amp, lambda, &f, exterior, &opts)?.max_abs();
    if inner == 0.0 {
        return Ok(0.0);
    }
    Ok(outer / inner)
}

/// Scale-ρ prediction for one scale-R packet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PacketWindow {
    pub packet: usize,
    /// ρ^{-1/2}-caps within distance `ρ^{-1/2}` of `ω_θ`.
    pub caps: Vec<Vec<i64>>,
    /// Centre `v − v̄(y;ω_θ)` and radius `R^{(1+δ)/2}` of the admissible ṽ.
    pub v_center: Vec<f64>,
    pub v_radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regrouping {
    pub rho: f64,
    pub y: Vec<f64>,
    pub windows: Vec<PacketWindow>,
    /// `(θ̃, w)` → packet indices; disjoint and covering.
    pub families: BTreeMap<(Vec<i64>, Vec<i64>), Vec<usize>>,
    /// Max over families of the sampled Hausdorff distance divided by `R^{1/2+δ}`.
    pub hausdorff_ratio: f64,
}

/// `v̄(y;ω) = ∂_ωφ^λ(y;ω)`.
pub fn v_bar(phase: &PhaseSpec, y: &[f64], omega: &[f64], lambda: f64) -> Vec<f64> {
    phase.grad_omega_lambda(y, omega, lambda)
}

pub fn regroup_at_scale(phase: &PhaseSpec, dec: &Decomposition, y: &[f64], rho: f64, lambda: f64) -> Result<Regrouping> {
    let sc = &dec.scale;
    let (r, delta) = (sc.r, sc.delta);
    if rho < r.sqrt() * (1.0 - 1e-12) || rho > r.powf(1.0 - delta) * (1.0 + 1e-12) {
        return Err(Error::Parameter(format!("ρ = {} outside [R^{{1/2}}, R^{{1−δ}}] = [{}, {}]", rho, r.sqrt(), r.powf(1.0 - delta))));
    }
    if y.len() != phase.n {
        return Err(Error::Parameter("y must lie in ℝ^n".into()));
    }
    let small = PacketScale::new(sc.dim, rho, delta, sc.spacing)?;
    let mut windows = Vec::with_capacity(dec.packets.len());
    let mut families: BTreeMap<(Vec<i64>, Vec<i64>), Vec<usize>> = BTreeMap::new();
    for (i, p) in dec.packets.iter().enumerate() {
        let vb = v_bar(phase, y, &p.omega_theta, lambda);
        let shifted: Vec<f64> = p.v.iter().zip(&vb).map(|(a, b)| a - b).collect();
        let caps = small.caps_meeting(&p.omega_theta, small.cap_radius() - PSI_OUTER * small.cap_radius());
        windows.push(PacketWindow { packet: i, caps, v_center: shifted.clone(), v_radius: sc.s });
        let theta_t = small.nearest_cap(&p.omega_theta);
        let w: Vec<i64> = shifted.iter().map(|c| (c / sc.s).round() as i64).collect();
        families.entry((theta_t, w)).or_default().push(i);
    }
    // Hausdorff check on core samples inside B(y, ρ).
    let t: Vec<f64> = (0..=40).map(|k| y[phase.n - 1] - rho + 2.0 * rho * k as f64 / 40.0).collect();
    let cores: Vec<Vec<Vec<f64>>> = dec
        .packets
        .par_iter()
        .map(|p| {
            core_curve(phase, &p.omega_theta, &p.v, lambda, &t)
                .map(|c| {
                    c.t.iter()
                        .zip(c.gamma)
                        .filter_map(|(t, g)| {
                            g.map(|mut g| {
                                g.push(*t);
                                g
                            })
                        })
                        .filter(|x| dist(x, y) <= rho)
                        .collect()
                })
                .unwrap_or_default()
        })
        .collect();
    let one_sided = |a: &[Vec<f64>], b: &[Vec<f64>]| -> f64 {
        a.iter().map(|p| b.iter().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
    };
    let mut worst: f64 = 0.0;
    for members in families.values() {
        let union: Vec<Vec<f64>> = members.iter().flat_map(|&i| cores[i].iter().cloned()).collect();
        for &i in members {
            if cores[i].is_empty() {
                continue;
            }
            let dh = one_sided(&cores[i], &union).max(one_sided(&union, &cores[i]));
            worst = worst.max(dh);
        }
    }
    Ok(Regrouping { rho, y: y.to_vec(), windows, families, hausdorff_ratio: worst / sc.tube_radius() })
}

/// `e^{−2πi⟨v, ω−ω_θ⟩} ψ_θ(ω)` sampled on the scale's lattice.
pub fn modulated_cap(scale: &PacketScale, theta: &[i64], v: &[f64]) -> InputFunction {
    let wc = scale.cap_center(theta);
    let lat = OmegaLattice::ball(scale.dim, scale.spacing, &wc, PSI_OUTER * scale.cap_radius());
    let values = (0..lat.len())
        .map(|i| {
            let w = lat.point(i);
            let ph: f64 = -v.iter().zip(w.iter().zip(&wc)).map(|(a, (b, c))| a * (b - c)).sum::<f64>();
            cis_cycles(ph) * scale.psi(theta, &w)
        })
        .collect();
    InputFunction::Lattice { dim: scale.dim, spacing: scale.spacing, indices: lat.indices, values }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_has_no_packets() {
        let d = decompose(&InputFunction::Zero { dim: 1 }, 64.0, 0.1, 64.0).unwrap();
        assert!(d.packets.is_empty());
        assert_eq!(d.residual, 0.0);
    }

    #[test]
    fn bump_reconstructs_exactly() {
        let f = InputFunction::bump(vec![0.1], 0.5);
        let d = decompose(&f, 64.0, 0.1, 64.0).unwrap();
        assert!(d.residual <= 1e-6 * d.f_norm, "residual {}", d.residual);
        assert!(d.partition_defect <= 1e-10);
        assert!((0.125..=8.0).contains(&d.orthogonality_defect));
        let cap = d.scale.cap_radius();
        for p in &d.packets {
            for k in &p.indices {
                let w: Vec<f64> = k.iter().map(|&i| i as f64 * p.spacing).collect();
                assert!(dist(&w, &p.omega_theta) <= cap);
            }
        }
    }

    #[test]
    fn paraboloid_core_curve_is_a_line() {
        let ph = PhaseSpec::paraboloid(3);
        let w = [0.2, -0.1];
        let v = [5.0, 3.0];
        let t: Vec<f64> = (0..11).map(|i| -50.0 + 10.0 * i as f64).collect();
        let c = core_curve(&ph, &w, &v, 256.0, &t).unwrap();
        for (t, g) in c.t.iter().zip(&c.gamma) {
            let g = g.as_ref().unwrap();
            assert!((g[0] - (v[0] - t * w[0])).abs() < 1e-9);
            assert!((g[1] - (v[1] - t * w[1])).abs() < 1e-9);
        }
    }
}
