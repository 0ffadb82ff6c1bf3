//! Phase functions `φ(x;ω)` on `X × Ω ⊂ ℝ^n × ℝ^{n-1}`.
//!
//! Every supported kind is polynomial, so each phase is compiled into one
//! sparse polynomial in the variables `(x_1..x_n, ω_1..ω_{n-1})` together
//! with its symbolic derivatives. The rescaled phase is
//! `φ^λ(x;ω) = λ φ(x/λ; ω)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::norm;
use crate::poly::Poly;

pub type Block = Vec<Vec<Poly>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PhaseKind {
    /// `⟨x',ω⟩ + x_n h(ω)`.
    ExtensionGraph { h: Poly },
    /// `⟨x',ω⟩ + ½⟨A(x_n)ω,ω⟩` with block-diagonal `A`.
    ModelBlockDiag { blocks: Vec<Block> },
    /// `⟨x',ω⟩ + x_n h(ω) + E(x;ω)`.
    Reduced { h: Poly, e: Poly },
    /// `φ(x + y/λ; ω) − φ(y/λ; ω)`.
    Translated { base: Box<PhaseSpec>, y: Vec<f64>, lambda: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    pub n: usize,
    pub kind: PhaseKind,
    pub x_radius: f64,
    pub omega_radius: f64,
    phi: Poly,
    #[serde(skip)]
    derivs: Option<Box<Derivs>>,
}

#[derive(Clone, Debug, PartialEq, Default)]
struct Derivs {
    d_x: Vec<Poly>,
    d_w: Vec<Poly>,
    /// `[i][j] = ∂x_i ∂ω_j φ`
    d_xw: Vec<Vec<Poly>>,
    /// `[j][k] = ∂ω_j ∂ω_k φ`
    d_ww: Vec<Vec<Poly>>,
    /// `[i][j][k] = ∂x_i ∂ω_j ∂ω_k φ`
    d_xww: Vec<Vec<Vec<Poly>>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Curvature {
    PositiveDefinite,
    NegativeDefinite,
    Indefinite,
    Degenerate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureReport {
    pub eigenvalues: Vec<f64>,
    pub classification: Curvature,
    pub gauss: Vec<f64>,
}

/// Sup-norms of the closeness-to-paraboloid quantities over samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub mixed_minus_identity: f64,
    pub mixed_xn: f64,
    pub third_order_defect: f64,
    pub samples: usize,
}

fn omega_names(n: usize) -> Vec<String> {
    (1..n).map(|i| format!("w{}", i)).collect()
}

fn all_names(n: usize) -> Vec<String> {
    let mut v = crate::poly::x_names(n);
    v.extend(omega_names(n));
    v
}

fn lin_part(n: usize) -> Poly {
    let nv = 2 * n - 1;
    let mut p = Poly::zero(nv);
    for i in 0..n - 1 {
        p = &p + &(&Poly::var(nv, i) * &Poly::var(nv, n + i));
    }
    p
}

impl PhaseSpec {
    fn assemble(n: usize, kind: PhaseKind, phi: Poly, x_radius: f64, omega_radius: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Construction(format!("dimension must be >= 2, got {}", n)));
        }
        if !(x_radius > 0.0 && omega_radius > 0.0) {
            return Err(Error::Construction("domain radii must be positive".into()));
        }
        let mut s = PhaseSpec { n, kind, x_radius, omega_radius, phi, derivs: None };
        s.derivs = Some(Box::new(s.build_derivs()));
        Ok(s)
    }

    fn build_derivs(&self) -> Derivs {
        let n = self.n;
        let d_x: Vec<Poly> = (0..n).map(|i| self.phi.deriv(i)).collect();
        let d_w: Vec<Poly> = (0..n - 1).map(|j| self.phi.deriv(n + j)).collect();
        let d_xw: Vec<Vec<Poly>> = d_x.iter().map(|p| (0..n - 1).map(|j| p.deriv(n + j)).collect()).collect();
        let d_ww: Vec<Vec<Poly>> = d_w.iter().map(|p| (0..n - 1).map(|k| p.deriv(n + k)).collect()).collect();
        let d_xww = d_xw
            .iter()
            .map(|row| row.iter().map(|p| (0..n - 1).map(|k| p.deriv(n + k)).collect()).collect())
            .collect();
        Derivs { d_x, d_w, d_xw, d_ww, d_xww }
    }

    fn d(&self) -> &Derivs {
        self.derivs.as_deref().expect("derivatives are built at construction")
    }

    /// Rebuild derivative tables after deserialization.
    pub fn rehydrate(mut self) -> Self {
        if self.derivs.is_none() {
            self.derivs = Some(Box::new(self.build_derivs()));
        }
        self
    }

    pub fn extension(n: usize, h: Poly, x_radius: f64, omega_radius: f64) -> Result<Self> {
        if h.nvars() != n - 1 {
            return Err(Error::Construction(format!("h must have {} variables", n - 1)));
        }
        let nv = 2 * n - 1;
        let map: Vec<usize> = (0..n - 1).map(|j| n + j).collect();
        let phi = &lin_part(n) + &(&Poly::var(nv, n - 1) * &h.embed(nv, &map));
        Self::assemble(n, PhaseKind::ExtensionGraph { h }, phi, x_radius, omega_radius)
    }

    /// `φ_par = ⟨x',ω⟩ + x_n|ω|²/2`.
    pub fn paraboloid(n: usize) -> Self {
        let mut h = Poly::zero(n - 1);
        for j in 0..n - 1 {
            h = &h + &Poly::var(n - 1, j).pow(2).scale(0.5);
        }
        Self::extension(n, h, 1.0, 1.0).expect("valid paraboloid")
    }

    /// `φ_hyp = ⟨x',ω⟩ + x_3 ω_1 ω_2`.
    pub fn hyperbolic() -> Self {
        let h = &Poly::var(2, 0) * &Poly::var(2, 1);
        Self::extension(3, h, 1.0, 1.0).expect("valid hyperbolic phase")
    }

    pub fn reduced(n: usize, h: Poly, e: Poly, x_radius: f64, omega_radius: f64) -> Result<Self> {
        let nv = 2 * n - 1;
        if h.nvars() != n - 1 || e.nvars() != nv {
            return Err(Error::Construction("reduced phase: wrong variable counts".into()));
        }
        let map: Vec<usize> = (0..n - 1).map(|j| n + j).collect();
        let phi = &(&lin_part(n) + &(&Poly::var(nv, n - 1) * &h.embed(nv, &map))) + &e;
        Self::assemble(n, PhaseKind::Reduced { h, e }, phi, x_radius, omega_radius)
    }

    pub fn from_strings(n: usize, kind: &str, h: Option<&str>, e: Option<&str>, blocks: Option<&[Vec<Vec<String>>]>) -> Result<Self> {
        let wn = omega_names(n);
        let wr: Vec<&str> = wn.iter().map(|s| s.as_str()).collect();
        let an = all_names(n);
        let ar: Vec<&str> = an.iter().map(|s| s.as_str()).collect();
        match kind {
            "extension" => {
                let h = Poly::parse(h.ok_or_else(|| Error::Construction("missing h".into()))?, &wr, &[])?;
                Self::extension(n, h, 1.0, 1.0)
            }
            "reduced" => {
                let h = Poly::parse(h.ok_or_else(|| Error::Construction("missing h".into()))?, &wr, &[])?;
                let e = Poly::parse(e.unwrap_or("0"), &ar, &[])?;
                Self::reduced(n, h, e, 1.0, 1.0)
            }
            "model" => {
                let raw = blocks.ok_or_else(|| Error::Construction("missing blocks".into()))?;
                let mut bs = Vec::new();
                for b in raw {
                    let mut rows = Vec::new();
                    for r in b {
                        rows.push(r.iter().map(|s| Poly::parse(s, &["t"], &[])).collect::<Result<Vec<_>>>()?);
                    }
                    bs.push(rows);
                }
                build_model_phase(&bs, n)
            }
            other => Err(Error::Construction(format!("unknown phase kind {:?}", other))),
        }
    }

    pub fn poly(&self) -> &Poly {
        &self.phi
    }

    fn pack(&self, x: &[f64], w: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(w.len(), self.n - 1);
        let mut v = Vec::with_capacity(2 * self.n - 1);
        v.extend_from_slice(x);
        v.extend_from_slice(w);
        v
    }

    pub fn in_domain(&self, x: &[f64], w: &[f64]) -> bool {
        norm(x) <= self.x_radius * (1.0 + 1e-12) && norm(w) <= self.omega_radius * (1.0 + 1e-12)
    }

    pub fn phi(&self, x: &[f64], w: &[f64]) -> f64 {
        self.phi.eval(&self.pack(x, w))
    }

    pub fn grad_x(&self, x: &[f64], w: &[f64]) -> Vec<f64> {
        let p = self.pack(x, w);
        self.d().d_x.iter().map(|q| q.eval(&p)).collect()
    }

    pub fn grad_omega(&self, x: &[f64], w: &[f64]) -> Vec<f64> {
        let p = self.pack(x, w);
        self.d().d_w.iter().map(|q| q.eval(&p)).collect()
    }

    /// `∂²_{ωx}φ` as an `n × (n−1)` matrix.
    pub fn mixed(&self, x: &[f64], w: &[f64]) -> DMatrix<f64> {
        let p = self.pack(x, w);
        let d = &self.d().d_xw;
        DMatrix::from_fn(self.n, self.n - 1, |i, j| d[i][j].eval(&p))
    }

    pub fn hess_omega(&self, x: &[f64], w: &[f64]) -> DMatrix<f64> {
        let p = self.pack(x, w);
        let d = &self.d().d_ww;
        DMatrix::from_fn(self.n - 1, self.n - 1, |j, k| d[j][k].eval(&p))
    }

    /// `∂x_i ∂²_{ωω}φ` as an `(n−1) × (n−1)` matrix.
    pub fn third_xww(&self, i: usize, x: &[f64], w: &[f64]) -> DMatrix<f64> {
        let p = self.pack(x, w);
        let d = &self.d().d_xww[i];
        DMatrix::from_fn(self.n - 1, self.n - 1, |j, k| d[j][k].eval(&p))
    }

    pub fn phi_lambda(&self, x: &[f64], w: &[f64], lambda: f64) -> f64 {
        let xs: Vec<f64> = x.iter().map(|v| v / lambda).collect();
        lambda * self.phi(&xs, w)
    }

    pub fn grad_omega_lambda(&self, x: &[f64], w: &[f64], lambda: f64) -> Vec<f64> {
        let xs: Vec<f64> = x.iter().map(|v| v / lambda).collect();
        self.grad_omega(&xs, w).into_iter().map(|v| v * lambda).collect()
    }

    /// If the phase is of extension form, return `h`.
    pub fn extension_h(&self) -> Option<Poly> {
        let n = self.n;
        let rest = &self.phi - &lin_part(n);
        let mut h = Poly::zero(n - 1);
        for (e, c) in rest.terms() {
            if e[..n - 1].iter().any(|&k| k > 0) || e[n - 1] != 1 {
                return None;
            }
            h = &h + &Poly::monomial(n - 1, e[n..].to_vec(), c);
        }
        Some(h)
    }

    /// Unit vector spanning `ker ∂²_{ωx}φ(x;ω)^T`, oriented by the wedge product.
    pub fn gauss_map(&self, x: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        let m = self.mixed(x, w);
        let g0 = wedge(&m);
        let g0n = norm(&g0);
        let scale = m.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0).powi(self.n as i32 - 1);
        if !(g0n > 1e-12 * scale) {
            return Err(Error::Singular { x: x.to_vec(), omega: w.to_vec() });
        }
        Ok(g0.iter().map(|v| v / g0n).collect())
    }

    /// `G^λ(x;ω) = G(x/λ;ω)`.
    pub fn gauss_map_lambda(&self, x: &[f64], w: &[f64], lambda: f64) -> Result<Vec<f64>> {
        let xs: Vec<f64> = x.iter().map(|v| v / lambda).collect();
        self.gauss_map(&xs, w)
    }

    pub fn classify_curvature(&self, x: &[f64], w0: &[f64]) -> Result<CurvatureReport> {
        let g = self.gauss_map(x, w0)?;
        let d = self.n - 1;
        let mut hm = DMatrix::<f64>::zeros(d, d);
        for (i, gi) in g.iter().enumerate() {
            hm += self.third_xww(i, x, w0) * *gi;
        }
        let hm = (&hm + hm.transpose()) * 0.5;
        let mut eig: Vec<f64> = SymmetricEigen::new(hm).eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let classification = classify_eigenvalues(&eig);
        Ok(CurvatureReport { eigenvalues: eig, classification, gauss: g })
    }

    pub fn reduction_report(&self, samples: &[(Vec<f64>, Vec<f64>)]) -> ReductionReport {
        let n = self.n;
        let id = DMatrix::<f64>::identity(n - 1, n - 1);
        let mut r = ReductionReport { mixed_minus_identity: 0.0, mixed_xn: 0.0, third_order_defect: 0.0, samples: samples.len() };
        for (x, w) in samples {
            let m = self.mixed(x, w);
            let top = m.rows(0, n - 1).into_owned();
            r.mixed_minus_identity = r.mixed_minus_identity.max(op_norm(&(top - &id)));
            r.mixed_xn = r.mixed_xn.max(m.row(n - 1).norm());
            for k in 0..n {
                let t = self.third_xww(k, x, w);
                let target = if k == n - 1 { id.clone() } else { DMatrix::zeros(n - 1, n - 1) };
                r.third_order_defect = r.third_order_defect.max(op_norm(&(t - target)));
            }
        }
        r
    }

    /// Solve `∂_{x'}φ(x; Ψ) = u` for `Ψ` by damped Newton from `u`.
    pub fn psi(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        let mut w = u.to_vec();
        for _ in 0..50 {
            let g = self.grad_x(x, &w);
            let res: Vec<f64> = (0..n - 1).map(|i| g[i] - u[i]).collect();
            if norm(&res) <= 1e-10 {
                return Ok(w);
            }
            let jac = self.mixed(x, &w).rows(0, n - 1).into_owned();
            let step = jac
                .lu()
                .solve(&DVector::from_vec(res.clone()))
                .ok_or_else(|| Error::RootFinding(format!("singular Jacobian for Ψ at x={:?}", x)))?;
            w = damped_step(&w, step.as_slice(), |c| {
                let g = self.grad_x(x, c);
                norm(&(0..n - 1).map(|i| g[i] - u[i]).collect::<Vec<_>>())
            }, norm(&res));
        }
        Err(Error::RootFinding(format!("Ψ did not converge at x={:?}, u={:?}", x, u)))
    }

    /// `h_x(u) = ∂_{x_n}φ(x; Ψ(x;u))`.
    pub fn graph_h(&self, x: &[f64], u: &[f64]) -> Result<f64> {
        let w = self.psi(x, u)?;
        Ok(self.grad_x(x, &w)[self.n - 1])
    }

    /// Solve `∂_ωφ(z', x_n; ω) = target` for `z'` by damped Newton.
    pub fn solve_x_prime(&self, xn: f64, w: &[f64], target: &[f64], guess: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        let mut z = guess.to_vec();
        let resid = |z: &[f64]| -> Vec<f64> {
            let mut x = z.to_vec();
            x.push(xn);
            self.grad_omega(&x, w).iter().zip(target).map(|(a, b)| a - b).collect()
        };
        for _ in 0..50 {
            let r = resid(&z);
            let scale = 1.0 + norm(target);
            if norm(&r) <= 1e-12 * scale {
                return Ok(z);
            }
            let mut x = z.clone();
            x.push(xn);
            let jac = self.mixed(&x, w).rows(0, n - 1).transpose();
            let step = jac
                .lu()
                .solve(&DVector::from_vec(r.clone()))
                .ok_or_else(|| Error::RootFinding(format!("singular ∂²_{{ωx'}}φ at x={:?}", x)))?;
            z = damped_step(&z, step.as_slice(), |c| norm(&resid(c)), norm(&r));
        }
        let r = norm(&resid(&z));
        if r <= 1e-9 * (1.0 + norm(target)) {
            return Ok(z);
        }
        Err(Error::RootFinding(format!("x' solve did not converge (residual {:e}) at x_n={}, ω={:?}", r, xn, w)))
    }
}

pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().max()
}

fn damped_step(x: &[f64], step: &[f64], f: impl Fn(&[f64]) -> f64, f0: f64) -> Vec<f64> {
    let mut t = 1.0;
    for _ in 0..30 {
        let c: Vec<f64> = x.iter().zip(step).map(|(a, s)| a - t * s).collect();
        if f(&c) < f0 || t < 1e-6 {
            return c;
        }
        t *= 0.5;
    }
    x.iter().zip(step).map(|(a, s)| a - t * s).collect()
}

/// Generalized cross product of the `n − 1` columns of an `n × (n−1)` matrix.
pub fn wedge(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    (0..n)
        .map(|i| {
            let minor = m.clone().remove_row(i);
            let det = if minor.nrows() == 0 { 1.0 } else { minor.determinant() };
            if (i + 1 + n) % 2 == 0 { det } else { -det }
        })
        .collect()
}

pub fn classify_eigenvalues(eig: &[f64]) -> Curvature {
    let mx = eig.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let tol = 1e-8 * mx;
    if mx == 0.0 || eig.iter().any(|v| v.abs() <= tol) {
        Curvature::Degenerate
    } else if eig.iter().all(|v| *v > 0.0) {
        Curvature::PositiveDefinite
    } else if eig.iter().all(|v| *v < 0.0) {
        Curvature::NegativeDefinite
    } else {
        Curvature::Indefinite
    }
}

/// The block `[[t, t²], [t², t + t³]]`.
pub fn kakeya_block() -> Block {
    let p = |s: &str| Poly::parse(s, &["t"], &[]).unwrap();
    vec![vec![p("t"), p("t^2")], vec![p("t^2"), p("t+t^3")]]
}

/// The block `[[0, t], [t, t²]]`.
pub fn bourgain_block() -> Block {
    let p = |s: &str| Poly::parse(s, &["t"], &[]).unwrap();
    vec![vec![p("0"), p("t")], vec![p("t"), p("t^2")]]
}

/// `⟨x',ω⟩ + ½⟨A(x_n)ω,ω⟩` with `A = diag(blocks)`.
pub fn build_model_phase(blocks: &[Block], n: usize) -> Result<PhaseSpec> {
    if n < 2 {
        return Err(Error::Construction(format!("dimension must be >= 2, got {}", n)));
    }
    let total: usize = blocks.iter().map(|b| b.len()).sum();
    if total != n - 1 {
        return Err(Error::Construction(format!("blocks cover {} coordinates, need {}", total, n - 1)));
    }
    let nv = 2 * n - 1;
    let mut phi = lin_part(n);
    let mut off = 0;
    for (bi, b) in blocks.iter().enumerate() {
        let s = b.len();
        for (j, row) in b.iter().enumerate() {
            if row.len() != s {
                return Err(Error::Construction(format!("block {} is not square", bi)));
            }
            for (k, e) in row.iter().enumerate() {
                if e.nvars() != 1 {
                    return Err(Error::Construction(format!("block {} entry ({},{}) is not univariate", bi, j, k)));
                }
                if e != &b[k][j] {
                    return Err(Error::Construction(format!("block {} is not symmetric at ({},{})", bi, j, k)));
                }
                if e.coeff(&[0]) != 0.0 {
                    return Err(Error::Construction(format!("block {} has A(0) != 0 at ({},{})", bi, j, k)));
                }
                let a = e.embed(nv, &[n - 1]);
                let term = &(&a * &Poly::var(nv, n + off + j)) * &Poly::var(nv, n + off + k);
                phi = &phi + &term.scale(0.5);
            }
        }
        off += s;
    }
    PhaseSpec::assemble(n, PhaseKind::ModelBlockDiag { blocks: blocks.to_vec() }, phi, 1.0, 1.0)
}

impl PhaseSpec {
    /// `A(t)` for model phases.
    pub fn model_matrix(&self, t: f64) -> Option<DMatrix<f64>> {
        let PhaseKind::ModelBlockDiag { blocks } = &self.kind else { return None };
        let d = self.n - 1;
        let mut a = DMatrix::zeros(d, d);
        let mut off = 0;
        for b in blocks {
            for (j, row) in b.iter().enumerate() {
                for (k, e) in row.iter().enumerate() {
                    a[(off + j, off + k)] = e.eval(&[t]);
                }
            }
            off += b.len();
        }
        Some(a)
    }

    pub fn parabolic_rescale(&self, wbar: &[f64], rho: f64) -> Result<PhaseSpec> {
        if rho < 1.0 {
            return Err(Error::Parameter(format!("rescaling factor must be >= 1, got {}", rho)));
        }
        if norm(wbar) > 1.0 {
            return Err(Error::Domain(format!("ω̄ = {:?} outside the unit ball", wbar)));
        }
        let d = self.n - 1;
        let rescale_in = |p: &Poly, wvars: &[usize]| -> Result<Poly> {
            // ρ²(p(ω̄ + ω/ρ) − p(ω̄) − ρ⁻¹⟨∂p(ω̄), ω⟩) in the ω variables listed.
            let nv = p.nvars();
            let mut subs: Vec<Poly> = (0..nv).map(|i| Poly::var(nv, i)).collect();
            let mut at_bar: Vec<Option<f64>> = vec![None; nv];
            for (j, &v) in wvars.iter().enumerate() {
                subs[v] = &Poly::constant(nv, wbar[j]) + &Poly::var(nv, v).scale(1.0 / rho);
                at_bar[v] = Some(wbar[j]);
            }
            let shifted = p.compose(&subs)?;
            let mut out = &shifted - &p.partial_eval(&at_bar);
            for &v in wvars.iter() {
                let dp = p.deriv(v).partial_eval(&at_bar);
                out = &out - &(&dp * &Poly::var(nv, v)).scale(1.0 / rho);
            }
            let out = out.scale(rho * rho);
            Ok(out.prune(1e-13 * out.max_abs_coeff().max(1.0)))
        };
        let wv: Vec<usize> = (0..d).collect();
        match &self.kind {
            PhaseKind::ExtensionGraph { h } => {
                PhaseSpec::extension(self.n, rescale_in(h, &wv)?, self.x_radius, self.omega_radius)
            }
            PhaseKind::Reduced { h, e } => {
                let ew: Vec<usize> = (0..d).map(|j| self.n + j).collect();
                PhaseSpec::reduced(self.n, rescale_in(h, &wv)?, rescale_in(e, &ew)?, self.x_radius, self.omega_radius)
            }
            _ => Err(Error::Construction("parabolic rescaling needs an extension or reduced phase".into())),
        }
    }

    pub fn translate(&self, y: &[f64], lambda: f64) -> Result<PhaseSpec> {
        if y.len() != self.n {
            return Err(Error::Parameter("translation vector has wrong dimension".into()));
        }
        let s: Vec<f64> = y.iter().map(|v| v / lambda).collect();
        if norm(&s) > self.x_radius {
            return Err(Error::Domain(format!("y/λ = {:?} lies outside X", s)));
        }
        let nv = 2 * self.n - 1;
        let subs: Vec<Poly> = (0..nv)
            .map(|i| if i < self.n { &Poly::var(nv, i) + &Poly::constant(nv, s[i]) } else { Poly::var(nv, i) })
            .collect();
        let fixed: Vec<Option<f64>> = (0..nv).map(|i| if i < self.n { Some(s[i]) } else { None }).collect();
        let phi = &self.phi.compose(&subs)? - &self.phi.partial_eval(&fixed);
        let phi = phi.prune(1e-14 * phi.max_abs_coeff().max(1.0));
        let kind = PhaseKind::Translated { base: Box::new(self.clone()), y: y.to_vec(), lambda };
        PhaseSpec::assemble(self.n, kind, phi, self.x_radius, self.omega_radius)
    }

    pub fn describe(&self) -> String {
        let names = all_names(self.n);
        let r: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        self.phi.to_string_with(&r)
    }
}

/// Variable names used by phase polynomials.
pub fn phase_var_names(n: usize) -> Vec<String> {
    all_names(n)
}

/// External JSON form of a phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseDoc {
    pub n: usize,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<Vec<Vec<String>>>>,
    #[serde(default = "one")]
    pub x_radius: f64,
    #[serde(default = "one")]
    pub omega_radius: f64,
}

fn one() -> f64 {
    1.0
}

impl PhaseDoc {
    pub fn build(&self) -> Result<PhaseSpec> {
        let mut p = PhaseSpec::from_strings(self.n, &self.kind, self.h.as_deref(), self.e.as_deref(), self.blocks.as_deref())?;
        p.x_radius = self.x_radius;
        p.omega_radius = self.omega_radius;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paraboloid_gauss_and_curvature() {
        let p = PhaseSpec::paraboloid(3);
        let g = p.gauss_map(&[0.1, 0.2, 0.3], &[0.3, -0.4]).unwrap();
        let nrm = (1.0f64 + 0.25).sqrt();
        let want = [-0.3 / nrm, 0.4 / nrm, 1.0 / nrm];
        for (a, b) in g.iter().zip(want) {
            assert!((a - b).abs() < 1e-14);
        }
        let c = p.classify_curvature(&[0.0; 3], &[0.0, 0.0]).unwrap();
        assert_eq!(c.classification, Curvature::PositiveDefinite);
        assert!(c.eigenvalues.iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn hyperbolic_is_indefinite() {
        let p = PhaseSpec::hyperbolic();
        let g = p.gauss_map(&[0.0; 3], &[0.5, 0.25]).unwrap();
        let nrm = (0.25f64 * 0.25 + 0.25 + 1.0).sqrt();
        assert!((g[0] + 0.25 / nrm).abs() < 1e-14 && (g[1] + 0.5 / nrm).abs() < 1e-14);
        let c = p.classify_curvature(&[0.0; 3], &[0.0, 0.0]).unwrap();
        assert_eq!(c.classification, Curvature::Indefinite);
        assert!((c.eigenvalues[0] + 1.0).abs() < 1e-14 && (c.eigenvalues[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn model_phase_validation() {
        let p = |s: &str| Poly::parse(s, &["t"], &[]).unwrap();
        let nonsym = vec![vec![p("t"), p("t^2")], vec![p("t"), p("t")]];
        assert!(build_model_phase(&[nonsym], 3).is_err());
        let shifted = vec![vec![p("1+t")]];
        assert!(build_model_phase(&[shifted.clone(), shifted], 3).is_err());
        assert!(build_model_phase(&[kakeya_block()], 4).is_err());
        assert!(build_model_phase(&[kakeya_block()], 3).is_ok());
    }

    #[test]
    fn bourgain_fails_positive_definiteness() {
        let ph = build_model_phase(&[bourgain_block()], 3).unwrap();
        let c = ph.classify_curvature(&[0.0; 3], &[0.0, 0.0]).unwrap();
        assert_ne!(c.classification, Curvature::PositiveDefinite);
    }

    #[test]
    fn rank_failure_is_an_error() {
        let h = Poly::zero(2);
        let nv = 5;
        // φ = x1 ω1 only: ∂²_{ωx}φ has rank 1.
        let e = &(&Poly::var(nv, 0) * &Poly::var(nv, 3)) - &lin_part(3);
        let ph = PhaseSpec::reduced(3, h, e, 1.0, 1.0).unwrap();
        assert!(matches!(ph.gauss_map(&[0.0; 3], &[0.0, 0.0]), Err(Error::Singular { .. })));
    }

    #[test]
    fn translate_outside_domain() {
        let p = PhaseSpec::paraboloid(2);
        assert!(matches!(p.translate(&[0.0, 10.0], 2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn phase_doc_roundtrip() {
        let doc: PhaseDoc = serde_json::from_str(
            r#"{"n":3,"kind":"model","blocks":[[["t","t^2"],["t^2","t+t^3"]]],"x_radius":1.0,"omega_radius":1.0}"#,
        )
        .unwrap();
        let ph = doc.build().unwrap();
        let a = ph.model_matrix(0.5).unwrap();
        assert!((a[(1, 1)] - 0.625).abs() < 1e-15);
        let back: PhaseDoc = serde_json::from_str(&serde_json::to_string(&doc).unwrap()).unwrap();
        assert_eq!(back, doc);
    }
}
