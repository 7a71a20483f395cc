//! Safeguarded Newton–bisection for increasing functions.

use crate::error::{Error, Result};

/// Iteration cap shared by all inverse computations.
pub const MAX_ITER: usize = 200;

/// Finds the root of an increasing `f` in `[lo, hi]`.
///
/// `f` returns the value and the derivative. Newton steps are taken when they
/// stay inside the current bracket and shrink it fast enough; otherwise the
/// bracket is bisected. Terminates when the step falls below a few ulps.
pub fn solve_increasing<F>(f: F, mut lo: f64, mut hi: f64) -> Result<f64>
where
    F: Fn(f64) -> (f64, f64),
{
    if !(lo <= hi) {
        return Err(Error::ConvergenceFailure(format!("empty bracket [{lo}, {hi}]")));
    }
    let (flo, _) = f(lo);
    if flo == 0.0 {
        return Ok(lo);
    }
    let (fhi, _) = f(hi);
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo > 0.0 || fhi < 0.0 {
        return Err(Error::ConvergenceFailure(format!("no sign change on [{lo:e}, {hi:e}]: f = ({flo:e}, {fhi:e})")));
    }

    let mut x = 0.5 * (lo + hi);
    let mut dx_old = hi - lo;
    let mut dx = dx_old;
    for _ in 0..MAX_ITER {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / dfx;
        let use_newton = dfx.is_finite() && dfx > 0.0 && newton > lo && newton < hi && (fx.abs() * 2.0 <= (dx_old * dfx).abs());
        dx_old = dx;
        let next = if use_newton { newton } else { 0.5 * (lo + hi) };
        dx = next - x;
        let tol = 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE);
        if dx.abs() <= tol || next <= lo || next >= hi {
            return Ok(next.clamp(lo, hi));
        }
        x = next;
    }
    Err(Error::ConvergenceFailure(format!("iteration cap reached on [{lo:e}, {hi:e}]")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_root() {
        let r = solve_increasing(|x| (x * x * x - 2.0, 3.0 * x * x), 0.0, 2.0).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-15);
    }

    #[test]
    fn tiny_scale() {
        // Root at 1e-200 of a near-linear function.
        let r = solve_increasing(|x| (x + x * x - 1e-200, 1.0 + 2.0 * x), 0.0, 1e-199).unwrap();
        assert!((r / 1e-200 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn no_sign_change() {
        assert!(solve_increasing(|x| (x + 1.0, 1.0), 0.0, 1.0).is_err());
    }

    #[test]
    fn flat_derivative_falls_back_to_bisection() {
        let r = solve_increasing(|x| ((x - 0.3).powi(3), 0.0), 0.0, 1.0).unwrap();
        assert!((r - 0.3).abs() < 1e-5);
    }
}
