//! Scalar root finding: bisection down to a narrow bracket, then Newton.

use crate::error::{Error, Result};

/// Root of `f` in `[lo, hi]`, which must bracket a sign change.
///
/// Bisects until the bracket is narrower than `width`, then polishes with
/// Newton steps using `df`, falling back to bisection whenever a Newton step
/// leaves the bracket. Stops once `|f(x)| <= ftol` or after 200 iterations.
pub fn bisect_newton<F, D>(f: F, df: D, lo: f64, hi: f64, width: f64, ftol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let (fa, fb) = (f(a), f(b));
    if !(fa.is_finite() && fb.is_finite()) {
        return Err(Error::NoRoot(format!("non-finite endpoint value on [{lo}, {hi}]")));
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoRoot(format!("no sign change on [{lo}, {hi}]")));
    }
    let neg_at_a = fa < 0.0;
    let shrink = |a: &mut f64, b: &mut f64, x: f64, fx: f64| {
        if (fx < 0.0) == neg_at_a {
            *a = x;
        } else {
            *b = x;
        }
    };

    while b - a > width {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        shrink(&mut a, &mut b, m, fm);
    }

    let mut x = 0.5 * (a + b);
    let mut best = (f64::INFINITY, x);
    for _ in 0..200 {
        let fx = f(x);
        if fx.abs() < best.0 {
            best = (fx.abs(), x);
        }
        if fx.abs() <= ftol {
            return Ok(x);
        }
        shrink(&mut a, &mut b, x, fx);
        let d = df(x);
        let newton = x - fx / d;
        x = if d != 0.0 && newton > a && newton < b { newton } else { 0.5 * (a + b) };
        if b - a <= f64::EPSILON * x.abs().max(1.0) {
            break;
        }
    }
    if best.0 <= ftol {
        Ok(best.1)
    } else {
        Err(Error::NoRoot(format!("residual {:e} above tolerance {ftol:e}", best.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt2() {
        let r = bisect_newton(|x| x * x - 2.0, |x| 2.0 * x, 0.0, 2.0, 1e-8, 1e-15).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn decreasing_function() {
        let r = bisect_newton(|x| 1.0 - x.powi(3), |x| -3.0 * x * x, 0.0, 3.0, 1e-8, 1e-14).unwrap();
        assert!((r - 1.0).abs() < 1e-14);
    }

    #[test]
    fn no_sign_change() {
        assert!(matches!(
            bisect_newton(|x| x * x + 1.0, |x| 2.0 * x, -1.0, 1.0, 1e-8, 1e-12),
            Err(Error::NoRoot(_))
        ));
    }
}
