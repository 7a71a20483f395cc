//! Regression and tail-index estimators shared by the asymptotic checks.

use serde::Serialize;

use crate::error::{Error, Result};

/// Ordinary least-squares line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Fits `y = slope·x + intercept` by least squares.
pub fn linear_regression(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    let n = xs.len();
    if n != ys.len() {
        return Err(Error::InsufficientData("x and y lengths differ".into()));
    }
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} points")));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::InsufficientData("degenerate abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LineFit { slope, intercept, r_squared, points: n })
}

/// Power law `y ≈ c·x^p`, returned as `(p, c, fit)`. Non-positive entries are skipped.
pub fn power_law(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, LineFit)> {
    let (lx, ly): (Vec<f64>, Vec<f64>) =
        xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).unzip();
    let fit = linear_regression(&lx, &ly)?;
    Ok((fit.slope, fit.intercept.exp(), fit))
}

/// Exponential `y ≈ c·e^{r x}`, returned as `(r, c, fit)`.
pub fn exponential(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, LineFit)> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = xs.iter().zip(ys).filter(|(_, y)| **y > 0.0).map(|(x, y)| (*x, y.ln())).unzip();
    let fit = linear_regression(&lx, &ly)?;
    Ok((fit.slope, fit.intercept.exp(), fit))
}

/// Hill estimator of the tail index from the `k` largest of `values`.
///
/// Uses α̂ = k / Σ_{i<k} ln(X_(i)/X_(k)) with X_(0) ≥ X_(1) ≥ … the order
/// statistics; only positive values take part.
pub fn hill(values: &[f64], k: usize) -> Result<f64> {
    let mut pos: Vec<f64> = values.iter().copied().filter(|v| *v > 0.0 && v.is_finite()).collect();
    if k < 2 || pos.len() <= k {
        return Err(Error::InsufficientData(format!("hill needs more than k = {k} positive values, got {}", pos.len())));
    }
    pos.sort_by(|a, b| b.total_cmp(a));
    let threshold = pos[k];
    let s: f64 = pos[..k].iter().map(|v| (v / threshold).ln()).sum();
    if s <= 0.0 {
        return Err(Error::InsufficientData("tied order statistics".into()));
    }
    Ok(k as f64 / s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_power_law() {
        let xs: Vec<f64> = (10..1000).map(|n| n as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x.powf(-4.0 / 3.0)).collect();
        let (p, c, fit) = power_law(&xs, &ys).unwrap();
        assert!((p + 4.0 / 3.0).abs() < 1e-12);
        assert!((c - 2.5).abs() < 1e-10);
        assert!(fit.r_squared > 1.0 - 1e-12);
    }

    #[test]
    fn recovers_exponential() {
        let xs: Vec<f64> = (0..50).map(|n| n as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * (-0.7 * x).exp()).collect();
        let (r, c, _) = exponential(&xs, &ys).unwrap();
        assert!((r + 0.7).abs() < 1e-12);
        assert!((c - 3.0).abs() < 1e-10);
    }

    #[test]
    fn hill_on_exact_pareto_quantiles() {
        // Deterministic Pareto(α = 1.5) quantiles.
        let n = 200_000;
        let alpha = 1.5;
        let v: Vec<f64> = (0..n).map(|i| (1.0 - (i as f64 + 0.5) / n as f64).powf(-1.0 / alpha)).collect();
        let a = hill(&v, 2000).unwrap();
        assert!((a - alpha).abs() / alpha < 0.01, "{a}");
    }

    #[test]
    fn too_few_points() {
        assert!(linear_regression(&[1.0], &[2.0]).is_err());
        assert!(hill(&[1.0, 2.0], 5).is_err());
    }
}
