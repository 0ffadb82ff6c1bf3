//! Exact rational exponent bookkeeping.
//!
//! Everything here is computed in `BigRational`; no floating point is used.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

pub type Q = BigRational;

pub fn q(num: i64, den: i64) -> Q {
    Q::new(BigInt::from(num), BigInt::from(den))
}

fn qi(v: i64) -> Q {
    Q::from_integer(BigInt::from(v))
}

fn ser_q<S: Serializer>(v: &Q, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

/// An exact exponent together with the formula that produced it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RationalExponent {
    #[serde(serialize_with = "ser_q")]
    pub value: Q,
    pub provenance: String,
}

impl RationalExponent {
    fn new(value: Q, provenance: String) -> Self {
        // BigRational is always reduced with a positive denominator.
        RationalExponent { value, provenance }
    }
}

impl fmt::Display for RationalExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Hypothesis {
    H2,
    H2Plus,
}

impl Hypothesis {
    pub fn name(self) -> &'static str {
        match self {
            Hypothesis::H2 => "H2",
            Hypothesis::H2Plus => "H2plus",
        }
    }
}

pub fn theorem_endpoint(n: u32, hyp: Hypothesis) -> Result<RationalExponent> {
    if n < 2 {
        return Err(Error::Parameter(format!("theorem_endpoint needs n >= 2, got {}", n)));
    }
    let m = n as i64;
    let odd = n % 2 == 1;
    let v = match (hyp, odd) {
        (Hypothesis::H2, true) => q(2 * (m + 1), m - 1),
        (Hypothesis::H2, false) => q(2 * (m + 2), m),
        (Hypothesis::H2Plus, true) => q(2 * (3 * m + 1), 3 * m - 3),
        (Hypothesis::H2Plus, false) => q(2 * (3 * m + 2), 3 * m - 2),
    };
    Ok(RationalExponent::new(v, format!("theorem_endpoint(n={}, {})", n, hyp.name())))
}

pub fn pbar(k: u32, n: u32) -> Result<RationalExponent> {
    if k < 1 || k > n || n + k <= 2 {
        return Err(Error::Parameter(format!("pbar needs 1 <= k <= n with n+k > 2, got k={}, n={}", k, n)));
    }
    let s = (n + k) as i64;
    Ok(RationalExponent::new(q(2 * s, s - 2), format!("pbar(k={}, n={})", k, n)))
}

/// Symbolic tag for `pbar0(k, m) = pbar(m, m) + delta`; never a number.
pub fn pbar0_tag(k: u32, m: u32) -> Result<String> {
    let base = pbar(m, m)?;
    Ok(format!("pbar0(k={}, m={}) = {} + δ", k, m, base.value))
}

pub fn necessary_exponent(m: u32, sigma: &Q, n: u32) -> Result<RationalExponent> {
    if m < 1 || m > n {
        return Err(Error::Parameter(format!("necessary_exponent needs 1 <= m <= n, got m={}, n={}", m, n)));
    }
    if sigma.is_negative() || *sigma > Q::one() {
        return Err(Error::Parameter(format!("sigma must lie in [0,1], got {}", sigma)));
    }
    let s = sigma * qi((n - m) as i64) + qi(m as i64);
    let den = &s - Q::one();
    if !den.is_positive() {
        return Err(Error::Parameter(format!(
            "denominator sigma(n-m)+m-1 = {} must be positive",
            den
        )));
    }
    let v = qi(2) * s / den;
    Ok(RationalExponent::new(v, format!("necessary_exponent(m={}, sigma={}, n={})", m, sigma, n)))
}

/// The optimal `(m, sigma)` pair for each hypothesis.
pub fn optimal_m_sigma(n: u32, hyp: Hypothesis) -> Result<(u32, Q)> {
    if n < 2 {
        return Err(Error::Parameter(format!("n must be >= 2, got {}", n)));
    }
    let m = if n % 2 == 1 { (n + 1) / 2 } else { n / 2 + 1 };
    let sigma = match hyp {
        Hypothesis::H2 => Q::zero(),
        Hypothesis::H2Plus => q(1, 2),
    };
    Ok((m, sigma))
}

/// Bennett–Carbery–Tao multilinear exponent `2k/(k-1)`.
pub fn bct_exponent(k: u32) -> Q {
    q(2 * k as i64, k as i64 - 1)
}

pub fn pbar_fn(n: u32) -> impl Fn(u32) -> Q {
    move |k| pbar(k, n).map(|r| r.value).expect("k in range")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Mode {
    PositiveDefinite,
    General,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Bound {
    Finite(Q),
    Infinite,
}

impl Bound {
    fn ge(&self, v: &Q) -> bool {
        match self {
            Bound::Finite(b) => b >= v,
            Bound::Infinite => true,
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Finite(b) => write!(f, "{}", b),
            Bound::Infinite => write!(f, "inf"),
        }
    }
}

impl Serialize for Bound {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Window {
    pub k: u32,
    #[serde(serialize_with = "ser_q")]
    pub broad: Q,
    #[serde(serialize_with = "ser_q")]
    pub lower: Q,
    pub upper: Bound,
    /// `lower <= broad <= upper`: the broad estimate at this k converts.
    pub admissible: bool,
}

impl Window {
    /// `[max(broad, lower), upper]` is nonempty.
    pub fn nonempty(&self) -> bool {
        let lo = if self.broad > self.lower { &self.broad } else { &self.lower };
        self.upper.ge(lo)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Conversion {
    Linear {
        k_star: u32,
        p_linear: RationalExponent,
        windows: Vec<Window>,
    },
    NoLinearRange {
        windows: Vec<Window>,
    },
}

impl Conversion {
    pub fn p_linear(&self) -> Option<&Q> {
        match self {
            Conversion::Linear { p_linear, .. } => Some(&p_linear.value),
            Conversion::NoLinearRange { .. } => None,
        }
    }

    pub fn k_star(&self) -> Option<u32> {
        match self {
            Conversion::Linear { k_star, .. } => Some(*k_star),
            Conversion::NoLinearRange { .. } => None,
        }
    }
}

fn linear_window(n: u32, k: u32, mode: Mode) -> (Q, Bound) {
    let (n, k) = (n as i64, k as i64);
    match mode {
        Mode::PositiveDefinite => {
            let lower = q(2 * (2 * n - k + 2), 2 * n - k);
            let upper = if k == 2 { Bound::Infinite } else { Bound::Finite(q(2 * (k - 1), k - 2)) };
            (lower, upper)
        }
        Mode::General => (q(2 * (n - k + 2), n - k + 1), Bound::Infinite),
    }
}

/// Convert k-broad estimates into a linear estimate.
///
/// `k` qualifies when the broad exponent itself lies in the linear window
/// for that `k`; the largest qualifying `k` is chosen.
pub fn broad_to_linear(n: u32, broad: &dyn Fn(u32) -> Q, mode: Mode) -> Result<Conversion> {
    if n < 2 {
        return Err(Error::Parameter(format!("broad_to_linear needs n >= 2, got {}", n)));
    }
    let windows: Vec<Window> = (2..=n)
        .map(|k| {
            let b = broad(k);
            let (lower, upper) = linear_window(n, k, mode);
            let admissible = lower <= b && upper.ge(&b);
            Window { k, broad: b, lower, upper, admissible }
        })
        .collect();
    let best = windows.iter().filter(|w| w.admissible).max_by(|a, b| {
        a.k.cmp(&b.k).then_with(|| b.broad.cmp(&a.broad))
    });
    Ok(match best {
        Some(w) => Conversion::Linear {
            k_star: w.k,
            p_linear: RationalExponent::new(
                w.broad.clone(),
                format!("broad_to_linear(n={}, k*={}, {:?})", n, w.k, mode),
            ),
            windows,
        },
        None => Conversion::NoLinearRange { windows },
    })
}

pub fn e_kn(k: u32, n: u32, p: &Q) -> Result<RationalExponent> {
    if !p.is_positive() {
        return Err(Error::Parameter(format!("e_kn needs p > 0, got {}", p)));
    }
    let v = q(1, 2) * (q(1, 2) - p.recip()) * qi((n + k) as i64);
    Ok(RationalExponent::new(v, format!("e_kn(k={}, n={}, p={})", k, n, p)))
}

#[derive(Clone, Debug, Serialize)]
pub struct Figure1Row {
    pub n: u32,
    pub h2: RationalExponent,
    pub h2plus: RationalExponent,
}

#[derive(Clone, Debug, Serialize)]
pub struct Figure2Row {
    pub n: u32,
    pub h2_m: u32,
    #[serde(serialize_with = "ser_q")]
    pub h2_sigma: Q,
    pub h2plus_m: u32,
    #[serde(serialize_with = "ser_q")]
    pub h2plus_sigma: Q,
    pub h2_p: RationalExponent,
    pub h2plus_p: RationalExponent,
}

pub fn figure1(n_max: u32) -> Result<Vec<Figure1Row>> {
    (2..=n_max)
        .map(|n| {
            Ok(Figure1Row {
                n,
                h2: theorem_endpoint(n, Hypothesis::H2)?,
                h2plus: theorem_endpoint(n, Hypothesis::H2Plus)?,
            })
        })
        .collect()
}

pub fn figure2(n_max: u32) -> Result<Vec<Figure2Row>> {
    (2..=n_max)
        .map(|n| {
            let (m1, s1) = optimal_m_sigma(n, Hypothesis::H2)?;
            let (m2, s2) = optimal_m_sigma(n, Hypothesis::H2Plus)?;
            Ok(Figure2Row {
                n,
                h2_p: necessary_exponent(m1, &s1, n)?,
                h2plus_p: necessary_exponent(m2, &s2, n)?,
                h2_m: m1,
                h2_sigma: s1,
                h2plus_m: m2,
                h2plus_sigma: s2,
            })
        })
        .collect()
}

pub fn tables_markdown(n_max: u32) -> Result<String> {
    let mut s = String::from("| n | H2 | H2plus |\n|---|---|---|\n");
    for r in figure1(n_max)? {
        s.push_str(&format!("| {} | {} | {} |\n", r.n, r.h2, r.h2plus));
    }
    s.push_str("\n| n | H2 (m, sigma) | H2plus (m, sigma) |\n|---|---|---|\n");
    for r in figure2(n_max)? {
        s.push_str(&format!(
            "| {} | ({}, {}) | ({}, {}) |\n",
            r.n, r.h2_m, r.h2_sigma, r.h2plus_m, r.h2plus_sigma
        ));
    }
    Ok(s)
}

pub fn tables_csv(n_max: u32) -> Result<String> {
    let mut s = String::from("n,h2,h2plus,h2_m,h2_sigma,h2plus_m,h2plus_sigma\n");
    for (a, b) in figure1(n_max)?.into_iter().zip(figure2(n_max)?) {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            a.n, a.h2, a.h2plus, b.h2_m, b.h2_sigma, b.h2plus_m, b.h2plus_sigma
        ));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_examples() {
        assert_eq!(theorem_endpoint(3, Hypothesis::H2Plus).unwrap().value, q(10, 3));
        assert_eq!(theorem_endpoint(4, Hypothesis::H2Plus).unwrap().value, q(14, 5));
        assert_eq!(theorem_endpoint(3, Hypothesis::H2).unwrap().value, qi(4));
        assert!(theorem_endpoint(1, Hypothesis::H2).is_err());
    }

    #[test]
    fn pbar_examples() {
        assert_eq!(pbar(2, 3).unwrap().value, q(10, 3));
        for n in 2..20 {
            assert_eq!(pbar(n, n).unwrap().value, q(2 * n as i64, n as i64 - 1));
            assert_eq!(pbar(1, n).unwrap().value, q(2 * (n as i64 + 1), n as i64 - 1));
        }
        assert!(pbar(0, 3).is_err());
        assert!(pbar(4, 3).is_err());
    }

    #[test]
    fn necessary_examples() {
        for n in (3..30).step_by(2) {
            let v = necessary_exponent((n + 1) / 2, &q(1, 2), n).unwrap().value;
            assert_eq!(v, q(2 * (3 * n as i64 + 1), 3 * n as i64 - 3));
        }
        assert_eq!(necessary_exponent(5, &q(3, 7), 5).unwrap().value, q(10, 4));
        assert_eq!(necessary_exponent(3, &Q::zero(), 4).unwrap().value, q(12, 4));
        assert!(necessary_exponent(1, &Q::zero(), 3).is_err());
    }

    #[test]
    fn conversion_examples() {
        let c = broad_to_linear(4, &pbar_fn(4), Mode::PositiveDefinite).unwrap();
        assert_eq!(c.k_star(), Some(3));
        assert_eq!(c.p_linear(), Some(&q(14, 5)));
        let c = broad_to_linear(5, &pbar_fn(5), Mode::PositiveDefinite).unwrap();
        assert_eq!((c.k_star(), c.p_linear().cloned()), (Some(3), Some(q(8, 3))));
        let c = broad_to_linear(3, &bct_exponent, Mode::General).unwrap();
        assert_eq!((c.k_star(), c.p_linear().cloned()), (Some(2), Some(qi(4))));
    }

    #[test]
    fn no_linear_range() {
        let c = broad_to_linear(4, &|_| qi(1), Mode::PositiveDefinite).unwrap();
        assert!(matches!(c, Conversion::NoLinearRange { .. }));
    }

    #[test]
    fn e_kn_examples() {
        assert_eq!(e_kn(2, 3, &qi(4)).unwrap().value, q(5, 8));
        assert_eq!(e_kn(2, 3, &qi(2)).unwrap().value, Q::zero());
        for n in 2..12 {
            for k in 1..=n {
                let p = pbar(k, n).unwrap().value;
                assert_eq!(e_kn(k, n, &p).unwrap().value, q(1, 2));
            }
        }
    }

    #[test]
    fn pbar0_is_symbolic() {
        let t = pbar0_tag(3, 2).unwrap();
        assert!(t.contains('δ'));
        assert!(t.contains("4"));
    }
}
