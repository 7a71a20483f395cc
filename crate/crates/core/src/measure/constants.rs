//! Tail constants of the excursion counts τ± under μ̂.

use serde::Serialize;

use super::DensityEstimate;
use crate::error::{Error, Result};
use crate::params::MapParams;

/// Constants of μ̂(aτ⁺ + bτ⁻ > t) ≈ C_b t^{−1/β₁} + C_a t^{−1/β₂}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantsReport {
    pub a: f64,
    pub b: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub h_at_zero_minus: f64,
    pub h_at_zero_plus: f64,
    pub big_b: [Option<f64>; 4],
    pub c: [Option<f64>; 4],
    /// h(0⁻)·B₁·|a|^{1/β₂}; zero when a = 0.
    pub c_a: f64,
    /// h(0⁺)·B₂·|b|^{1/β₁}; zero when b = 0.
    pub c_b: f64,
    /// Prefactor of μ̂(τ > t) ≈ C_τ t^{−1/β}, from a = b = 1.
    pub c_tau: Option<f64>,
}

impl ConstantsReport {
    /// Leading-order prediction C_b t^{−1/β₁} + C_a t^{−1/β₂}.
    pub fn predicted_tail(&self, t: f64) -> f64 {
        let term = |c: f64, beta: f64| if c == 0.0 { 0.0 } else { c * t.powf(-1.0 / beta) };
        term(self.c_b, self.beta1) + term(self.c_a, self.beta2)
    }

    /// Leading-order prediction C_τ t^{−1/β} for the total return time.
    pub fn predicted_tau_tail(&self, t: f64) -> Option<f64> {
        let beta = self.beta1.max(self.beta2);
        self.c_tau.map(|c| c * t.powf(-1.0 / beta))
    }
}

/// C_a and C_b need B₁ (ℓ₂ > 0) and B₂ (ℓ₁ > 0) respectively.
pub fn tail_constants(params: &MapParams, density: &DensityEstimate, a: f64, b: f64) -> Result<ConstantsReport> {
    let h_minus = density.h_at_zero_minus;
    let h_plus = density.h_at_zero_plus;
    let (beta1, beta2) = (params.beta1(), params.beta2());
    let c_a = if a == 0.0 {
        0.0
    } else {
        let b1 = params.big_b1().ok_or_else(|| Error::ConstantDomain("C_a needs ell2 > 0".into()))?;
        h_minus * b1 * a.abs().powf(1.0 / beta2)
    };
    let c_b = if b == 0.0 {
        0.0
    } else {
        let b2 = params.big_b2().ok_or_else(|| Error::ConstantDomain("C_b needs ell1 > 0".into()))?;
        h_plus * b2 * b.abs().powf(1.0 / beta1)
    };
    let unit_a = params.big_b1().map(|b1| h_minus * b1);
    let unit_b = params.big_b2().map(|b2| h_plus * b2);
    let c_tau = if beta1 == beta2 {
        unit_a.zip(unit_b).map(|(x, y)| x + y)
    } else if beta2 > beta1 {
        unit_a
    } else {
        unit_b
    };
    Ok(ConstantsReport {
        a,
        b,
        beta1,
        beta2,
        h_at_zero_minus: h_minus,
        h_at_zero_plus: h_plus,
        big_b: [params.big_b1(), params.big_b2(), params.big_b3(), params.big_b4()],
        c: [params.c1(), params.c2(), params.c3(), params.c4()],
        c_a,
        c_b,
        c_tau,
    })
}
