//! k-broad norms of sampled fields.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amplitude::AmplitudeSpec;
use crate::error::{Error, Result};
use crate::field::{required_spacing, EvalOptions, InputFunction, OmegaLattice, Operator, PacketTerm, Region};
use crate::numerics::norm;
use crate::phase::PhaseSpec;

/// Sample points of one member of the ball family, with quadrature weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

/// Cubes of side `K²` tiling `[lo, hi]^n`, each sampled on a `per_axis^n` midpoint grid.
pub fn ball_family(n: usize, lo: f64, hi: f64, k_scale: f64, per_axis: usize) -> Result<Vec<Ball>> {
    let side = k_scale * k_scale;
    if !(hi > lo && side > 0.0 && per_axis >= 1) {
        return Err(Error::Parameter("ball family needs hi > lo, K > 0 and at least one sample per axis".into()));
    }
    let cubes = ((hi - lo) / side).ceil().max(1.0) as usize;
    let h = side / per_axis as f64;
    let w = h.powi(n as i32);
    let mut out = Vec::new();
    for c in 0..cubes.pow(n as u32) {
        let mut rem = c;
        let corner: Vec<f64> = (0..n)
            .map(|_| {
                let i = rem % cubes;
                rem /= cubes;
                lo + i as f64 * side
            })
            .collect();
        let mut points = Vec::new();
        for s in 0..per_axis.pow(n as u32) {
            let mut r = s;
            points.push(
                corner
                    .iter()
                    .map(|c0| {
                        let i = r % per_axis;
                        r /= per_axis;
                        c0 + (i as f64 + 0.5) * h
                    })
                    .collect(),
            );
        }
        out.push(Ball {
            center: corner.iter().map(|c0| c0 + 0.5 * side).collect(),
            radius: side,
            weights: vec![w; points.len()],
            points,
        });
    }
    Ok(out)
}

/// `T^λ f_τ` on every ball, one entry per `K⁻¹`-cap `τ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapField {
    pub n: usize,
    pub k_scale: f64,
    pub caps: Vec<Vec<f64>>,
    pub balls: Vec<Ball>,
    /// `values[ball][cap][point]`.
    pub values: Vec<Vec<Vec<Complex64>>>,
    /// `directions[ball][cap]`: unit `G^λ(x̄; ω_τ)`.
    pub directions: Vec<Vec<Vec<f64>>>,
    /// Caps carrying a piece of the input; adapted frames are built from these.
    pub present: Vec<bool>,
}

fn cap_key(w: &[f64], k: f64) -> Vec<i64> {
    w.iter().map(|v| (v * k).round() as i64).collect()
}

/// Split `f` into pieces supported on the cubes of side `1/K` centred on `K⁻¹ℤ^{n−1}`.
pub fn split_caps(f: &InputFunction, k: f64, lattice_spacing: f64) -> Result<BTreeMap<Vec<i64>, InputFunction>> {
    let mut out = BTreeMap::new();
    match f {
        InputFunction::Zero { .. } => {}
        InputFunction::Packets { dim, terms } => {
            let mut by: BTreeMap<Vec<i64>, Vec<PacketTerm>> = BTreeMap::new();
            for t in terms {
                by.entry(cap_key(&t.center, k)).or_default().push(t.clone());
            }
            for (key, terms) in by {
                out.insert(key, InputFunction::Packets { dim: *dim, terms });
            }
        }
        InputFunction::Lattice { dim, spacing, indices, values } => {
            let mut by: BTreeMap<Vec<i64>, (Vec<Vec<i64>>, Vec<Complex64>)> = BTreeMap::new();
            for (idx, v) in indices.iter().zip(values) {
                let w: Vec<f64> = idx.iter().map(|&i| i as f64 * spacing).collect();
                let e = by.entry(cap_key(&w, k)).or_default();
                e.0.push(idx.clone());
                e.1.push(*v);
            }
            for (key, (indices, values)) in by {
                out.insert(key, InputFunction::Lattice { dim: *dim, spacing: *spacing, indices, values });
            }
        }
        InputFunction::ModulatedBump { .. } => {
            let (c, r) = f.support().expect("bump has a support");
            let lat = OmegaLattice::ball(c.len(), lattice_spacing, &c, r);
            let values = f.on_lattice(&lat)?;
            let sampled = InputFunction::Lattice { dim: c.len(), spacing: lattice_spacing, indices: lat.indices, values };
            return split_caps(&sampled, k, lattice_spacing);
        }
    }
    Ok(out)
}

impl CapField {
    /// Evaluate every cap piece of `f` on the ball family.
    pub fn from_operator(
        phase: &PhaseSpec,
        amp: &AmplitudeSpec,
        lambda: f64,
        f: &InputFunction,
        k_scale: f64,
        balls: Vec<Ball>,
        opts: &EvalOptions,
    ) -> Result<CapField> {
        let all: Vec<Vec<f64>> = balls.iter().flat_map(|b| b.points.iter().cloned()).collect();
        let h = opts.spacing.unwrap_or_else(|| required_spacing(phase, amp, lambda, f, &all));
        let pieces = split_caps(f, k_scale, h)?;
        // Every cap meeting the amplitude's ω-support.
        let d = phase.n - 1;
        let reach = (amp.omega_radius * k_scale).ceil() as i64 + 1;
        let width = (2 * reach + 1) as usize;
        let mut keys: std::collections::BTreeSet<Vec<i64>> = pieces.keys().cloned().collect();
        for i in 0..width.pow(d as u32) {
            let mut rem = i;
            let key: Vec<i64> = (0..d)
                .map(|_| {
                    let v = (rem % width) as i64 - reach;
                    rem /= width;
                    v
                })
                .collect();
            let w: Vec<f64> = key.iter().map(|&k| k as f64 / k_scale).collect();
            if amp.omega_factor(&w) > 0.0 {
                keys.insert(key);
            }
        }
        let caps: Vec<Vec<f64>> = keys.iter().map(|k| k.iter().map(|&i| i as f64 / k_scale).collect()).collect();
        let present: Vec<bool> = keys.iter().map(|k| pieces.contains_key(k)).collect();
        let mut per_cap = Vec::new();
        for key in &keys {
            per_cap.push(match pieces.get(key) {
                Some(piece) => Operator::new(phase, amp, lambda, piece, &all, opts)?.values(&all),
                None => vec![Complex64::new(0.0, 0.0); all.len()],
            });
        }
        let mut values = Vec::with_capacity(balls.len());
        let mut directions = Vec::with_capacity(balls.len());
        let mut offset = 0;
        for b in &balls {
            let len = b.points.len();
            values.push(per_cap.iter().map(|v| v[offset..offset + len].to_vec()).collect());
            directions.push(caps.iter().map(|w| phase.gauss_map_lambda(&b.center, w, lambda)).collect::<Result<Vec<_>>>()?);
            offset += len;
        }
        Ok(CapField { n: phase.n, k_scale, caps, balls, values, directions, present })
    }

    pub fn validate(&self) -> Result<()> {
        let nb = self.balls.len();
        if self.values.len() != nb || self.directions.len() != nb {
            return Err(Error::Construction("values and directions need one entry per ball".into()));
        }
        for (b, ball) in self.balls.iter().enumerate() {
            if self.values[b].len() != self.caps.len() || self.directions[b].len() != self.caps.len() || self.present.len() != self.caps.len() {
                return Err(Error::Construction("one entry per cap is required".into()));
            }
            if self.values[b].iter().any(|v| v.len() != ball.points.len()) {
                return Err(Error::Construction("one value per sample point is required".into()));
            }
            if self.directions[b].iter().any(|d| d.len() != self.n || (norm(d) - 1.0).abs() > 1e-9) {
                return Err(Error::Construction("cap directions must be unit vectors in ℝ^n".into()));
            }
        }
        Ok(())
    }

    fn same_geometry(&self, o: &CapField) -> bool {
        self.n == o.n && self.k_scale == o.k_scale && self.caps == o.caps && self.balls == o.balls && self.directions == o.directions
    }

    /// `T^λ(f₁ + f₂)` cap by cap.
    pub fn add(&self, o: &CapField) -> Result<CapField> {
        if !self.same_geometry(o) {
            return Err(Error::Parameter("cap fields differ in geometry".into()));
        }
        let mut out = self.clone();
        for (p, q) in out.present.iter_mut().zip(&o.present) {
            *p |= q;
        }
        for (vb, ob) in out.values.iter_mut().zip(&o.values) {
            for (vc, oc) in vb.iter_mut().zip(ob) {
                for (v, w) in vc.iter_mut().zip(oc) {
                    *v += w;
                }
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, s: f64) -> CapField {
        let mut out = self.clone();
        for v in out.values.iter_mut().flatten().flatten() {
            *v *= s;
        }
        out
    }

    /// Same geometry with the field of one cap set to zero.
    pub fn without_cap(&self, cap: usize) -> CapField {
        let mut out = self.clone();
        for vb in out.values.iter_mut() {
            if let Some(vc) = vb.get_mut(cap) {
                vc.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            }
        }
        out
    }

    /// `‖T^λ f_τ‖^p_{L^p(B)}` for every cap.
    pub fn masses(&self, ball: usize, p: f64) -> Vec<f64> {
        let w = &self.balls[ball].weights;
        self.values[ball].iter().map(|vc| vc.iter().zip(w).map(|(v, wi)| v.norm().powf(p) * wi).sum()).collect()
    }
}

/// Orthonormal `n × (k−1)` frame.
pub type Frame = DMatrix<f64>;

#[derive(Clone, Debug, PartialEq)]
pub struct KBroadConfig {
    pub k: usize,
    pub a: usize,
    pub p: f64,
    pub k_scale: f64,
    /// Angle below which a direction counts as lying in a subspace; defaults to `1/K`.
    pub threshold: f64,
    /// Shared quasi-uniform part of the Grassmannian net.
    pub frames: Vec<Frame>,
    /// Cap on frames adapted to cap directions, per ball.
    pub adapted_limit: usize,
    pub seed: u64,
    /// Forces a search strategy; by default exhaustive when at most 10⁶ tuples.
    pub search: Option<Search>,
}

fn orthonormal(m: DMatrix<f64>) -> Option<Frame> {
    let cols = m.ncols();
    let qr = m.clone().qr();
    let r = qr.r();
    let scale = (0..cols).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..cols).any(|i| r[(i, i)].abs() <= 1e-9 * scale.max(1e-300)) {
        return None;
    }
    Some(qr.q().columns(0, cols).into_owned())
}

/// `count` random frames spanning `(k−1)`-planes in `ℝ^n`.
pub fn random_frames(n: usize, k: usize, count: usize, seed: u64) -> Vec<Frame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let m = DMatrix::from_fn(n, k - 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        if let Some(f) = orthonormal(m) {
            out.push(f);
        }
    }
    out
}

impl KBroadConfig {
    pub fn new(n: usize, k: usize, a: usize, p: f64, k_scale: f64, frames: usize, seed: u64) -> Result<Self> {
        if !(2 <= k && k <= n) {
            return Err(Error::Parameter(format!("need 2 <= k <= n, got k = {}, n = {}", k, n)));
        }
        if a < 1 || !(k_scale >= 1.0) || !(p >= 1.0) {
            return Err(Error::Parameter("need A >= 1, K >= 1 and p >= 1".into()));
        }
        Ok(KBroadConfig {
            k,
            a,
            p,
            k_scale,
            threshold: 1.0 / k_scale,
            frames: random_frames(n, k, frames, seed),
            adapted_limit: 2000,
            seed,
            search: None,
        })
    }

    pub fn with_a(&self, a: usize) -> Self {
        KBroadConfig { a, ..self.clone() }
    }

    pub fn with_p(&self, p: f64) -> Self {
        KBroadConfig { p, ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Search {
    Exhaustive,
    Greedy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallMu {
    pub ball: usize,
    pub mu: f64,
    pub search: Search,
    /// Distinct hiding patterns after removing dominated ones.
    pub patterns: usize,
    /// Greedy value over the best of the random tuples (1 for exhaustive search).
    pub gap: f64,
    pub empty: bool,
}

type Mask = Vec<u64>;

fn mask_union(a: &mut Mask, b: &Mask) {
    for (x, y) in a.iter_mut().zip(b) {
        *x |= y;
    }
}

fn is_subset(a: &Mask, b: &Mask) -> bool {
    a.iter().zip(b).all(|(x, y)| x & !y == 0)
}

fn uncovered_max(masses: &[f64], cover: &Mask) -> f64 {
    masses.iter().enumerate().filter(|(i, _)| cover[i / 64] >> (i % 64) & 1 == 0).map(|(_, m)| *m).fold(0.0, f64::max)
}

fn frames_for_ball(cf: &CapField, ball: usize, cfg: &KBroadConfig) -> Vec<Frame> {
    let n = cf.n;
    let dirs: Vec<&Vec<f64>> = cf.directions[ball].iter().zip(&cf.present).filter(|(_, p)| **p).map(|(d, _)| d).collect();
    let mut out = cfg.frames.clone();
    let need = cfg.k - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xadab_7ed0 ^ ball as u64);
    if dirs.len() < need {
        if !dirs.is_empty() {
            let mut m = DMatrix::from_fn(n, need, |_, _| rng.sample::<f64, _>(StandardNormal));
            for (j, d) in dirs.iter().enumerate() {
                m.set_column(j, &nalgebra::DVector::from_row_slice(d.as_slice()));
            }
            out.extend(orthonormal(m));
        }
        return out;
    }
    // Frames spanned by subsets of cap directions, in lexicographic order.
    let mut idx: Vec<usize> = (0..need).collect();
    let mut added = 0;
    loop {
        let m = DMatrix::from_fn(n, need, |i, j| dirs[idx[j]][i]);
        if let Some(f) = orthonormal(m) {
            out.push(f);
            added += 1;
            if added >= cfg.adapted_limit {
                break;
            }
        }
        let Some(j) = (0..need).rev().find(|&j| idx[j] < dirs.len() - need + j) else {
            return out;
        };
        idx[j] += 1;
        for t in j + 1..need {
            idx[t] = idx[t - 1] + 1;
        }
    }
    out
}

/// `μ_{T^λf}(B)`: the min over A-tuples of the max cap mass not hidden by any of them.
pub fn mu_ball(cf: &CapField, ball: usize, cfg: &KBroadConfig) -> BallMu {
    let masses = cf.masses(ball, cfg.p);
    let base = BallMu { ball, mu: 0.0, search: Search::Exhaustive, patterns: 0, gap: 1.0, empty: false };
    if cf.balls[ball].points.is_empty() {
        return BallMu { empty: true, ..base };
    }
    let active: Vec<usize> = (0..masses.len()).filter(|&i| masses[i] > 0.0).collect();
    if active.is_empty() {
        return base;
    }
    let am: Vec<f64> = active.iter().map(|&i| masses[i]).collect();
    let words = active.len().div_ceil(64);
    let cos_t = cfg.threshold.cos();
    let frames = frames_for_ball(cf, ball, cfg);
    let mut masks: Vec<Mask> = frames
        .iter()
        .map(|f| {
            let mut m = vec![0u64; words];
            for (j, &c) in active.iter().enumerate() {
                let d = nalgebra::DVector::from_row_slice(&cf.directions[ball][c]);
                let inside = (f.transpose() * d).norm();
                if inside >= cos_t {
                    m[j / 64] |= 1 << (j % 64);
                }
            }
            m
        })
        .filter(|m| m.iter().any(|w| *w != 0))
        .collect();
    masks.sort();
    masks.dedup();
    // Dominated patterns never improve the minimum.
    let keep: Vec<bool> = (0..masks.len()).map(|i| !(0..masks.len()).any(|j| j != i && masks[i] != masks[j] && is_subset(&masks[i], &masks[j]))).collect();
    let masks: Vec<Mask> = masks.into_iter().zip(keep).filter(|(_, k)| *k).map(|(m, _)| m).collect();
    let full = uncovered_max(&am, &vec![0u64; words]);
    if masks.is_empty() {
        return BallMu { mu: full, patterns: 0, ..base };
    }
    let a = cfg.a;
    let size = (masks.len() as f64).powi(a as i32);
    if cfg.search.unwrap_or(if size <= 1e6 { Search::Exhaustive } else { Search::Greedy }) == Search::Exhaustive {
        let mut best = full;
        fn rec(masks: &[Mask], am: &[f64], start: usize, left: usize, cover: &Mask, best: &mut f64) {
            let cur = uncovered_max(am, cover);
            if cur < *best {
                *best = cur;
            }
            if left == 0 || *best == 0.0 {
                return;
            }
            for i in start..masks.len() {
                let mut c = cover.clone();
                mask_union(&mut c, &masks[i]);
                rec(masks, am, i, left - 1, &c, best);
            }
        }
        rec(&masks, &am, 0, a, &vec![0u64; words], &mut best);
        return BallMu { mu: best, patterns: masks.len(), ..base };
    }
    let mut cover = vec![0u64; words];
    for _ in 0..a {
        let pick = masks
            .iter()
            .map(|m| {
                let mut c = cover.clone();
                mask_union(&mut c, m);
                c
            })
            .min_by(|x, y| uncovered_max(&am, x).partial_cmp(&uncovered_max(&am, y)).unwrap())
            .expect("nonempty");
        cover = pick;
    }
    let greedy = uncovered_max(&am, &cover);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed ^ ((ball as u64) << 20));
    let mut random_best = f64::INFINITY;
    for _ in 0..1000 {
        let mut c = vec![0u64; words];
        for _ in 0..a {
            mask_union(&mut c, &masks[rng.random_range(0..masks.len())]);
        }
        random_best = random_best.min(uncovered_max(&am, &c));
    }
    let gap = if random_best > 0.0 { greedy / random_best } else if greedy == 0.0 { 1.0 } else { f64::INFINITY };
    BallMu { mu: greedy.min(random_best), search: Search::Greedy, patterns: masks.len(), gap, ..base }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlReport {
    pub value: f64,
    pub p: f64,
    pub balls: Vec<BallMu>,
}

impl BlReport {
    /// `Σ μ(B)`, the `p`-th power of the norm before rounding.
    pub fn power_sum(&self) -> f64 {
        self.balls.iter().map(|b| b.mu).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("ball,mu,search,patterns,gap\n");
        for b in &self.balls {
            s.push_str(&format!("{},{:e},{:?},{},{:e}\n", b.ball, b.mu, b.search, b.patterns, b.gap));
        }
        s
    }
}

fn meets(ball: &Ball, r: &Region) -> bool {
    r.contains(&ball.center) || ball.points.iter().any(|x| r.contains(x))
}

/// `(Σ_{B ∩ U ≠ ∅} μ(B))^{1/p}`.
pub fn bl_norm(cf: &CapField, region: Option<&Region>, cfg: &KBroadConfig) -> Result<BlReport> {
    match region {
        None => bl_norm_over(cf, None, cfg),
        Some(r) => bl_norm_over(cf, Some(std::slice::from_ref(r)), cfg),
    }
}

/// `bl_norm` over the union of `regions`; `None` means the whole family.
pub fn bl_norm_over(cf: &CapField, regions: Option<&[Region]>, cfg: &KBroadConfig) -> Result<BlReport> {
    cf.validate()?;
    let idx: Vec<usize> = (0..cf.balls.len()).filter(|&b| regions.map(|rs| rs.iter().any(|r| meets(&cf.balls[b], r))).unwrap_or(true)).collect();
    if idx.is_empty() {
        return Err(Error::Parameter("region meets no ball of the family".into()));
    }
    let balls: Vec<BallMu> = idx.par_iter().map(|&b| mu_ball(cf, b, cfg)).collect();
    let total: f64 = balls.iter().map(|b| b.mu).sum();
    Ok(BlReport { value: total.powf(1.0 / cfg.p), p: cfg.p, balls })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub lhs: f64,
    pub rhs: f64,
    /// Smallest constant making the inequality hold.
    pub constant: f64,
    pub pass: bool,
}

const C_MAX: f64 = 8.0;

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else if rhs == 0.0 {
        f64::INFINITY
    } else {
        lhs / rhs
    }
}

/// `bl_{k,A₁+A₂}(f₁+f₂) ≤ C (bl_{k,A₁}(f₁) + bl_{k,A₂}(f₂))`.
pub fn check_triangle(f1: &CapField, f2: &CapField, cfg: &KBroadConfig, a1: usize, a2: usize) -> Result<InequalityReport> {
    if cfg.a != a1 + a2 {
        return Err(Error::Parameter(format!("A = {} differs from A₁ + A₂ = {}", cfg.a, a1 + a2)));
    }
    let sum = f1.add(f2)?;
    let lhs = bl_norm(&sum, None, cfg)?.value;
    let b1 = if a1 == 0 { bl_norm_a0(f1, cfg)? } else { bl_norm(f1, None, &cfg.with_a(a1))?.value };
    let b2 = if a2 == 0 { bl_norm_a0(f2, cfg)? } else { bl_norm(f2, None, &cfg.with_a(a2))?.value };
    let rhs = b1 + b2;
    let constant = ratio(lhs, rhs);
    Ok(InequalityReport { lhs, rhs, constant, pass: constant <= C_MAX })
}

/// With no hiding planes `μ` is the largest cap mass.
fn bl_norm_a0(cf: &CapField, cfg: &KBroadConfig) -> Result<f64> {
    cf.validate()?;
    let total: f64 = (0..cf.balls.len()).map(|b| cf.masses(b, cfg.p).into_iter().fold(0.0, f64::max)).sum();
    Ok(total.powf(1.0 / cfg.p))
}

/// `bl^p_{k,A} ≤ C (bl^{p₁}_{k,A₁})^{α₁} (bl^{p₂}_{k,A₂})^{α₂}`.
#[allow(clippy::too_many_arguments)]
pub fn check_logconvexity(cf: &CapField, cfg: &KBroadConfig, p: f64, p1: f64, p2: f64, alpha1: f64, alpha2: f64, a1: usize, a2: usize) -> Result<InequalityReport> {
    if (alpha1 + alpha2 - 1.0).abs() > 1e-12 || alpha1 < 0.0 || alpha2 < 0.0 {
        return Err(Error::Parameter("α₁, α₂ must be nonnegative with α₁ + α₂ = 1".into()));
    }
    if (1.0 / p - alpha1 / p1 - alpha2 / p2).abs() > 1e-12 {
        return Err(Error::Parameter("exponents must satisfy 1/p = α₁/p₁ + α₂/p₂".into()));
    }
    if cfg.a != a1 + a2 || a1 == 0 || a2 == 0 {
        return Err(Error::Parameter("need A = A₁ + A₂ with A₁, A₂ >= 1".into()));
    }
    let lhs = bl_norm(cf, None, &cfg.with_p(p))?.value;
    let b1 = bl_norm(cf, None, &cfg.with_p(p1).with_a(a1))?.value;
    let b2 = bl_norm(cf, None, &cfg.with_p(p2).with_a(a2))?.value;
    let rhs = b1.powf(alpha1) * b2.powf(alpha2);
    let constant = ratio(lhs, rhs);
    Ok(InequalityReport { lhs, rhs, constant, pass: constant <= C_MAX })
}

/// A field with prescribed cap masses and directions on a single ball, for structural tests.
pub fn synthetic(n: usize, k_scale: f64, directions: Vec<Vec<f64>>, amplitudes: Vec<f64>) -> CapField {
    let ball = Ball { center: vec![0.0; n], radius: k_scale * k_scale, points: vec![vec![0.0; n]], weights: vec![1.0] };
    let caps = (0..directions.len()).map(|i| vec![i as f64 / k_scale; n - 1]).collect();
    let present = vec![true; directions.len()];
    let directions = directions.into_iter().map(|d| d.iter().map(|v| v / norm(&d)).collect()).collect();
    CapField {
        n,
        k_scale,
        caps,
        balls: vec![ball],
        values: vec![amplitudes.into_iter().map(|a| vec![Complex64::new(a, 0.0)]).collect()],
        directions: vec![directions],
        present,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cap_is_hidden() {
        let cf = synthetic(3, 8.0, vec![vec![0.3, -0.2, 1.0]], vec![2.0]);
        let cfg = KBroadConfig::new(3, 2, 1, 2.0, 8.0, 200, 1).unwrap();
        assert_eq!(mu_ball(&cf, 0, &cfg).mu, 0.0);
    }

    #[test]
    fn two_separated_caps_give_the_smaller_mass() {
        let cf = synthetic(3, 8.0, vec![vec![0.0, 0.0, 1.0], vec![0.6, 0.0, 0.8]], vec![2.0, 3.0]);
        let cfg = KBroadConfig::new(3, 2, 1, 2.0, 8.0, 2000, 1).unwrap();
        let m = mu_ball(&cf, 0, &cfg);
        assert_eq!(m.search, Search::Exhaustive);
        assert!((m.mu - 4.0).abs() < 1e-12);
    }

    #[test]
    fn one_plane_per_cap_hides_everything() {
        let dirs: Vec<Vec<f64>> = (0..4).map(|i| vec![0.3 * i as f64, 0.1, 1.0]).collect();
        let cf = synthetic(3, 8.0, dirs, vec![1.0, 2.0, 3.0, 4.0]);
        let cfg = KBroadConfig::new(3, 2, 4, 2.0, 8.0, 50, 1).unwrap();
        assert_eq!(mu_ball(&cf, 0, &cfg).mu, 0.0);
    }

    #[test]
    fn zero_field_has_zero_norm() {
        let cf = synthetic(3, 4.0, vec![vec![0.0, 0.0, 1.0]], vec![0.0]);
        let cfg = KBroadConfig::new(3, 2, 1, 2.0, 4.0, 10, 1).unwrap();
        assert_eq!(bl_norm(&cf, None, &cfg).unwrap().value, 0.0);
    }

    #[test]
    fn exponent_identity_is_enforced() {
        let cf = synthetic(3, 4.0, vec![vec![0.0, 0.0, 1.0]], vec![1.0]);
        let cfg = KBroadConfig::new(3, 2, 2, 4.0, 4.0, 10, 1).unwrap();
        assert!(check_logconvexity(&cf, &cfg, 4.0, 2.0, 8.0, 0.5, 0.5, 1, 1).is_err());
    }
}
