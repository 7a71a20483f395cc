//! Parameters of the two-fixed-point map family and the regime they imply.
//!
//! A map is pinned down by the neutral orders `ell1`, `ell2` at −1 and +1,
//! the critical orders `k1`, `k2` at 0⁻ and 0⁺, and four coefficients. The
//! remaining fields only steer how the explicit pieces are glued together.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_iota() -> f64 {
    0.5
}

fn default_blend_width() -> f64 {
    0.25
}

fn default_xi() -> f64 {
    0.5
}

/// The eight shape parameters plus construction controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapParams {
    pub ell1: f64,
    pub ell2: f64,
    pub k1: f64,
    pub k2: f64,
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    #[serde(default = "default_iota")]
    pub iota: f64,
    #[serde(default = "default_blend_width")]
    pub blend_width: f64,
    /// Quadratic coefficient of the local form at −1 when `ell1 = 0`.
    #[serde(default = "default_xi")]
    pub xi_coeff1: f64,
    /// Quadratic coefficient of the local form at +1 when `ell2 = 0`.
    #[serde(default = "default_xi")]
    pub xi_coeff2: f64,
}

/// Mixing regime predicted from β.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mixing {
    Exponential,
    Polynomial,
    InfiniteMeasure,
}

/// Summary of the exponents and what they predict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub beta1: f64,
    pub beta2: f64,
    pub beta: f64,
    /// The absolutely continuous invariant measure is finite.
    pub finite: bool,
    pub mixing: Mixing,
    /// Polynomial decay rate (1−β)/β of correlations, when applicable.
    pub rate: Option<f64>,
}

impl MapParams {
    /// Builds parameters with default construction controls.
    #[allow(clippy::too_many_arguments)]
    pub fn new(ell1: f64, ell2: f64, k1: f64, k2: f64, a1: f64, a2: f64, b1: f64, b2: f64) -> Self {
        MapParams {
            ell1,
            ell2,
            k1,
            k2,
            a1,
            a2,
            b1,
            b2,
            iota: default_iota(),
            blend_width: default_blend_width(),
            xi_coeff1: default_xi(),
            xi_coeff2: default_xi(),
        }
    }

    /// Symmetric reference map: ℓ = 1/2, k = 3/2, unit coefficients (β = 3/4).
    pub fn reference() -> Self {
        Self::new(0.5, 0.5, 1.5, 1.5, 1.0, 1.0, 1.0, 1.0)
    }

    /// Liverani–Saussol–Vaienti map with exponent `alpha`; the branch at +1 is affine.
    pub fn lsv(alpha: f64) -> Self {
        let mut p = Self::new(alpha, 0.0, 1.0, 1.0, 2.0, 2.0, 2f64.powf(alpha), 1.0);
        p.xi_coeff2 = 0.0;
        p
    }

    /// Pikovsky-type map with parameter `alpha > 1`.
    pub fn pikovsky(alpha: f64) -> Self {
        let a = (2.0 * alpha).powf(1.0 / alpha);
        let b = 1.0 / (2.0 * alpha);
        Self::new(alpha - 1.0, alpha - 1.0, 1.0 / alpha, 1.0 / alpha, a, a, b, b)
    }

    /// Doubling map x ↦ 2x ∓ 1 written in the family's coordinates.
    pub fn doubling() -> Self {
        let mut p = Self::new(0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 1.0, 1.0);
        p.xi_coeff1 = 0.0;
        p.xi_coeff2 = 0.0;
        p
    }

    pub fn beta1(&self) -> f64 {
        self.k2 * self.ell1
    }

    pub fn beta2(&self) -> f64 {
        self.k1 * self.ell2
    }

    pub fn beta(&self) -> f64 {
        self.beta1().max(self.beta2())
    }

    /// Checks ranges of every field.
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.ell1,
            self.ell2,
            self.k1,
            self.k2,
            self.a1,
            self.a2,
            self.b1,
            self.b2,
            self.iota,
            self.blend_width,
            self.xi_coeff1,
            self.xi_coeff2,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("all parameters must be finite".into()));
        }
        let bad = |name: &str, rule: &str| Err(Error::InvalidParams(format!("{name} must be {rule}")));
        if self.ell1 < 0.0 {
            return bad("ell1", ">= 0");
        }
        if self.ell2 < 0.0 {
            return bad("ell2", ">= 0");
        }
        for (name, v) in [("k1", self.k1), ("k2", self.k2), ("a1", self.a1), ("a2", self.a2), ("b1", self.b1), ("b2", self.b2)] {
            if v <= 0.0 {
                return bad(name, "> 0");
            }
        }
        if !(self.iota > 0.0 && self.iota < 1.0) {
            return bad("iota", "in (0, 1)");
        }
        if !(self.blend_width > 0.0 && self.blend_width < 1.0) {
            return bad("blend_width", "in (0, 1)");
        }
        if self.xi_coeff1 < 0.0 {
            return bad("xi_coeff1", ">= 0");
        }
        if self.xi_coeff2 < 0.0 {
            return bad("xi_coeff2", ">= 0");
        }
        if self.k1 == 1.0 && self.a1 <= 1.0 {
            return bad("a1", "> 1 when k1 = 1");
        }
        if self.k2 == 1.0 && self.a2 <= 1.0 {
            return bad("a2", "> 1 when k2 = 1");
        }
        Ok(())
    }

    /// Exponents and predicted regime. Needs no map construction.
    pub fn classify(&self) -> RegimeReport {
        let beta = self.beta();
        let (mixing, rate) = if beta == 0.0 {
            (Mixing::Exponential, None)
        } else if beta < 1.0 {
            (Mixing::Polynomial, Some((1.0 - beta) / beta))
        } else {
            (Mixing::InfiniteMeasure, None)
        };
        RegimeReport { beta1: self.beta1(), beta2: self.beta2(), beta, finite: beta < 1.0, mixing, rate }
    }

    /// C₁ = (ℓ₁b₁)^{−1/ℓ₁}: 1 + xₙ⁻ ∼ C₁ n^{−1/ℓ₁}.
    pub fn c1(&self) -> Option<f64> {
        (self.ell1 > 0.0).then(|| (self.ell1 * self.b1).powf(-1.0 / self.ell1))
    }

    /// C₂ = (ℓ₂b₂)^{−1/ℓ₂}: 1 − xₙ⁺ ∼ C₂ n^{−1/ℓ₂}.
    pub fn c2(&self) -> Option<f64> {
        (self.ell2 > 0.0).then(|| (self.ell2 * self.b2).powf(-1.0 / self.ell2))
    }

    /// C₃ = C₁/ℓ₁: |Δₙ⁻| ∼ C₃ n^{−(1+1/ℓ₁)}.
    pub fn c3(&self) -> Option<f64> {
        self.c1().map(|c| c / self.ell1)
    }

    /// C₄ = C₂/ℓ₂: |Δₙ⁺| ∼ C₄ n^{−(1+1/ℓ₂)}.
    pub fn c4(&self) -> Option<f64> {
        self.c2().map(|c| c / self.ell2)
    }

    /// B₁ = a₁^{−1/k₁}(ℓ₂b₂)^{−1/β₂}: |yₙ⁻| ∼ B₁ n^{−1/β₂}.
    pub fn big_b1(&self) -> Option<f64> {
        (self.ell2 > 0.0).then(|| self.a1.powf(-1.0 / self.k1) * (self.ell2 * self.b2).powf(-1.0 / self.beta2()))
    }

    /// B₂ = a₂^{−1/k₂}(ℓ₁b₁)^{−1/β₁}: yₙ⁺ ∼ B₂ n^{−1/β₁}.
    pub fn big_b2(&self) -> Option<f64> {
        (self.ell1 > 0.0).then(|| self.a2.powf(-1.0 / self.k2) * (self.ell1 * self.b1).powf(-1.0 / self.beta1()))
    }

    /// B₃ = B₁/β₂: |δₙ⁻| ∼ B₃ n^{−(1+1/β₂)}.
    pub fn big_b3(&self) -> Option<f64> {
        self.big_b1().map(|b| b / self.beta2())
    }

    /// B₄ = B₂/β₁: |δₙ⁺| ∼ B₄ n^{−(1+1/β₁)}.
    pub fn big_b4(&self) -> Option<f64> {
        self.big_b2().map(|b| b / self.beta1())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_regime() {
        let r = MapParams::reference().classify();
        assert_eq!(r.beta, 0.75);
        assert!(r.finite);
        assert_eq!(r.mixing, Mixing::Polynomial);
        assert!((r.rate.unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn lsv_regime() {
        let r = MapParams::lsv(0.9).classify();
        assert!((r.beta - 0.9).abs() < 1e-15);
        assert!((r.rate.unwrap() - 1.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn hyperbolic_regime() {
        let r = MapParams::doubling().classify();
        assert_eq!(r.beta, 0.0);
        assert_eq!(r.mixing, Mixing::Exponential);
    }

    #[test]
    fn pikovsky_regime() {
        let r = MapParams::pikovsky(3.0).classify();
        assert!((r.beta1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.beta2 - 2.0 / 3.0).abs() < 1e-12);
        assert!(r.finite);
    }

    #[test]
    fn rejects_nonpositive_k() {
        let mut p = MapParams::reference();
        p.k1 = 0.0;
        assert!(p.validate().is_err());
        p.k1 = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn reference_constants() {
        let p = MapParams::reference();
        // (ℓb)^{-1/ℓ} with ℓ = 1/2, b = 1 is 4; B₁ = 0.5^{-4/3}.
        assert!((p.c1().unwrap() - 4.0).abs() < 1e-12);
        assert!((p.c3().unwrap() - 8.0).abs() < 1e-12);
        assert!((p.big_b1().unwrap() - 0.5f64.powf(-4.0 / 3.0)).abs() < 1e-12);
        assert!((p.big_b3().unwrap() - 0.5f64.powf(-4.0 / 3.0) / 0.75).abs() < 1e-12);
    }
}
