//! Shared numerical utilities: smooth profiles, quadrature, sums, fits.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub const TAU: f64 = std::f64::consts::TAU;

/// `exp(-1/(1-t^2))` on `|t| < 1`, zero elsewhere.
pub fn bump(t: f64) -> f64 {
    let s = 1.0 - t * t;
    if s <= 0.0 {
        0.0
    } else {
        (-1.0 / s).exp()
    }
}

/// C^∞ step: 0 for `u <= 0`, 1 for `u >= 1`.
pub fn smooth_step(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / u).exp();
        let b = (-1.0 / (1.0 - u)).exp();
        a / (a + b)
    }
}

/// Mollified indicator: 1 on `r <= inner`, 0 on `r >= outer`.
pub fn plateau(r: f64, inner: f64, outer: f64) -> f64 {
    if r <= inner {
        1.0
    } else if r >= outer {
        0.0
    } else {
        1.0 - smooth_step((r - inner) / (outer - inner))
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `e^{2πi t}` with the argument reduced mod 1 first.
#[inline]
pub fn cis_cycles(t: f64) -> Complex64 {
    let r = t - t.round();
    let (s, c) = (TAU * r).sin_cos();
    Complex64::new(c, s)
}

/// Fixed-order pairwise summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        v.iter().sum()
    } else {
        let m = v.len() / 2;
        pairwise_sum(&v[..m]) + pairwise_sum(&v[m..])
    }
}

pub fn pairwise_sum_c(v: &[Complex64]) -> Complex64 {
    if v.len() <= 16 {
        v.iter().sum()
    } else {
        let m = v.len() / 2;
        pairwise_sum_c(&v[..m]) + pairwise_sum_c(&v[m..])
    }
}

const GK_X: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const GK_WK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const GK_WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Kronrod value, error estimate and the Kronrod rule applied to `|f|`.
fn gk15<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> (Complex64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * GK_WK[7];
    let mut g = fc * GK_WG[3];
    let mut abs = fc.norm() * GK_WK[7];
    for j in 0..7 {
        let x = h * GK_X[j];
        let (l, r) = (f(c - x), f(c + x));
        let s = l + r;
        k += s * GK_WK[j];
        abs += (l.norm() + r.norm()) * GK_WK[j];
        if j % 2 == 1 {
            g += s * GK_WG[j / 2];
        }
    }
    (k * h, ((k - g) * h).norm(), abs * h.abs())
}

/// Adaptive Gauss–Kronrod (7/15) quadrature of a complex integrand.
///
/// Subintervals stop splitting once the error estimate reaches the rounding
/// level of `∫|f|` on them.
pub fn integrate<F: Fn(f64) -> Complex64>(f: F, a: f64, b: f64, abs_tol: f64, max_depth: u32) -> Complex64 {
    fn rec<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> Complex64 {
        let (v, err, abs) = gk15(f, a, b);
        if err <= tol || err <= 50.0 * f64::EPSILON * abs || depth == 0 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth - 1) + rec(f, m, b, 0.5 * tol, depth - 1)
    }
    rec(&f, a, b, abs_tol, max_depth)
}

/// Truncated Taylor series arithmetic, used for derivative bounds.
#[derive(Clone, Debug)]
pub struct Jet(pub Vec<f64>);

impl Jet {
    pub fn var(x0: f64, scale: f64, order: usize) -> Jet {
        let mut c = vec![0.0; order + 1];
        c[0] = x0;
        if order > 0 {
            c[1] = scale;
        }
        Jet(c)
    }

    pub fn mul(&self, o: &Jet) -> Jet {
        let n = self.0.len();
        let mut c = vec![0.0; n];
        for i in 0..n {
            for j in 0..n - i {
                c[i + j] += self.0[i] * o.0[j];
            }
        }
        Jet(c)
    }

    pub fn recip(&self) -> Jet {
        let n = self.0.len();
        let mut c = vec![0.0; n];
        c[0] = 1.0 / self.0[0];
        for k in 1..n {
            let s: f64 = (1..=k).map(|j| self.0[j] * c[k - j]).sum();
            c[k] = -s / self.0[0];
        }
        Jet(c)
    }

    pub fn exp(&self) -> Jet {
        let n = self.0.len();
        let mut c = vec![0.0; n];
        c[0] = self.0[0].exp();
        for k in 1..n {
            let s: f64 = (1..=k).map(|j| j as f64 * self.0[j] * c[k - j]).sum();
            c[k] = s / k as f64;
        }
        Jet(c)
    }

    pub fn affine(&self, a: f64, b: f64) -> Jet {
        let mut c: Vec<f64> = self.0.iter().map(|v| a * v).collect();
        c[0] += b;
        Jet(c)
    }

    /// `k`-th derivative at the expansion point.
    pub fn derivative(&self, k: usize) -> f64 {
        let f: f64 = (1..=k).map(|i| i as f64).product();
        self.0[k] * f
    }
}

/// Derivatives `0..=order` of `bump((z - c)/r)` at `z`.
pub fn bump_derivatives(z: f64, c: f64, r: f64, order: usize) -> Vec<f64> {
    let u = (z - c) / r;
    if u.abs() >= 1.0 {
        return vec![0.0; order + 1];
    }
    let t = Jet::var(u, 1.0 / r, order);
    let w = t.mul(&t).affine(-1.0, 1.0);
    let e = w.recip().affine(-1.0, 0.0).exp();
    (0..=order).map(|k| e.derivative(k)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_ci95: (f64, f64),
    pub residuals: Vec<f64>,
}

/// Least-squares line with a Student-t 95% interval for the slope.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n < 3 || y.len() != n {
        return Err(Error::Parameter(format!("linear fit needs >= 3 paired points, got {}", n)));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Parameter("linear fit given non-finite data".into()));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Parameter("linear fit with constant abscissae".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - (intercept + slope * a)).collect();
    let dof = (n - 2) as f64;
    let s2 = residuals.iter().map(|r| r * r).sum::<f64>() / dof;
    let se = (s2 / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof).map(|d| d.inverse_cdf(0.975)).unwrap_or(f64::INFINITY);
    Ok(LinearFit { slope, intercept, slope_ci95: (slope - t * se, slope + t * se), residuals })
}

/// Log-log fit `log y = s log x + c`.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.iter().chain(y).any(|v| *v <= 0.0) {
        return Err(Error::Parameter("log-log fit needs positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk_integrates_polynomials_and_oscillations() {
        let v = integrate(|x| Complex64::new(x * x, 0.0), 0.0, 1.0, 1e-14, 20);
        assert!((v.re - 1.0 / 3.0).abs() < 1e-14);
        let w = integrate(|x| Complex64::new(0.0, 50.0 * x).exp(), 0.0, 1.0, 1e-13, 30);
        let exact = (Complex64::new(0.0, 50.0).exp() - 1.0) / Complex64::new(0.0, 50.0);
        assert!((w - exact).norm() < 1e-12);
    }

    #[test]
    fn jet_matches_finite_differences() {
        let h = 1e-4;
        let d = bump_derivatives(0.3, 0.0, 1.0, 2);
        let fd1 = (bump(0.3 + h) - bump(0.3 - h)) / (2.0 * h);
        let fd2 = (bump(0.3 + h) - 2.0 * bump(0.3) + bump(0.3 - h)) / (h * h);
        assert!((d[0] - bump(0.3)).abs() < 1e-15);
        assert!((d[1] - fd1).abs() < 1e-7);
        assert!((d[2] - fd2).abs() < 1e-5);
    }

    #[test]
    fn fit_recovers_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!(linear_fit(&x[..2], &y[..2]).is_err());
    }

    #[test]
    fn profiles() {
        assert_eq!(plateau(0.1, 0.5, 1.0), 1.0);
        assert_eq!(plateau(1.0, 0.5, 1.0), 0.0);
        let m = plateau(0.75, 0.5, 1.0);
        assert!((m - 0.5).abs() < 1e-12);
    }
}
