//! Amplitudes `a(x;ω)`, always of tensor form `a_x(x)·a_ω(ω)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{bump, dist, norm, plateau};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmplitudeKind {
    /// Smoothed indicator of the two balls, transition over the outer tenth.
    IndicatorSmoothed,
    /// Product of `exp(1 - 1/(1-r²))` bumps, equal to 1 at the centres.
    TensorBump,
    /// `a ≡ 1` on `Ω`, no x cut-off.
    ConstantOneOnOmega,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeSpec {
    pub kind: AmplitudeKind,
    pub x_radius: f64,
    pub omega_radius: f64,
    /// Centre of the x-support; empty means the origin.
    #[serde(default)]
    pub x_center: Vec<f64>,
}

impl AmplitudeSpec {
    pub fn new(kind: AmplitudeKind, x_radius: f64, omega_radius: f64) -> Result<Self> {
        if !(x_radius > 0.0 && omega_radius > 0.0) {
            return Err(Error::Construction("amplitude radii must be positive".into()));
        }
        Ok(AmplitudeSpec { kind, x_radius, omega_radius, x_center: Vec::new() })
    }

    pub fn constant_one(omega_radius: f64) -> Self {
        AmplitudeSpec { kind: AmplitudeKind::ConstantOneOnOmega, x_radius: f64::INFINITY, omega_radius, x_center: Vec::new() }
    }

    fn x_offset(&self, x: &[f64]) -> f64 {
        if self.x_center.is_empty() {
            norm(x)
        } else {
            dist(x, &self.x_center)
        }
    }

    /// x-factor at unit scale.
    pub fn x_factor(&self, x: &[f64]) -> f64 {
        match self.kind {
            AmplitudeKind::ConstantOneOnOmega => 1.0,
            AmplitudeKind::IndicatorSmoothed => plateau(self.x_offset(x), 0.9 * self.x_radius, self.x_radius),
            AmplitudeKind::TensorBump => std::f64::consts::E * bump(self.x_offset(x) / self.x_radius),
        }
    }

    pub fn omega_factor(&self, w: &[f64]) -> f64 {
        let r = norm(w);
        match self.kind {
            AmplitudeKind::ConstantOneOnOmega => {
                if r <= self.omega_radius {
                    1.0
                } else {
                    0.0
                }
            }
            AmplitudeKind::IndicatorSmoothed => plateau(r, 0.9 * self.omega_radius, self.omega_radius),
            AmplitudeKind::TensorBump => std::f64::consts::E * bump(r / self.omega_radius),
        }
    }

    pub fn value(&self, x: &[f64], w: &[f64]) -> f64 {
        self.x_factor(x) * self.omega_factor(w)
    }

    /// `a^λ(x;ω) = a(x/λ;ω)`.
    pub fn value_lambda(&self, x: &[f64], w: &[f64], lambda: f64) -> f64 {
        let xs: Vec<f64> = x.iter().map(|v| v / lambda).collect();
        self.value(&xs, w)
    }

    /// Amplitude of the translated operator: `ã(x;ω) = a(x + s;ω)`.
    pub fn translated(&self, s: &[f64]) -> Self {
        let c: Vec<f64> = if self.x_center.is_empty() {
            s.iter().map(|v| -v).collect()
        } else {
            self.x_center.iter().zip(s).map(|(c, v)| c - v).collect()
        };
        AmplitudeSpec { x_center: c, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_in_unit_interval() {
        for kind in [AmplitudeKind::IndicatorSmoothed, AmplitudeKind::TensorBump, AmplitudeKind::ConstantOneOnOmega] {
            let a = AmplitudeSpec::new(kind, 1.0, 0.5).unwrap();
            for i in 0..50 {
                let t = i as f64 / 25.0 - 1.0;
                let v = a.value(&[t, 0.3 * t], &[0.6 * t]);
                assert!((0.0..=1.0 + 1e-15).contains(&v));
            }
            assert_eq!(a.omega_factor(&[0.51]), 0.0);
        }
    }

    #[test]
    fn translation_moves_support() {
        let a = AmplitudeSpec::new(AmplitudeKind::TensorBump, 1.0, 1.0).unwrap();
        let b = a.translated(&[0.5, 0.0]);
        assert!((b.x_factor(&[-0.5, 0.0]) - 1.0).abs() < 1e-15);
        assert!((a.x_factor(&[0.2, 0.1]) - b.x_factor(&[-0.3, 0.1])).abs() < 1e-15);
    }
}
