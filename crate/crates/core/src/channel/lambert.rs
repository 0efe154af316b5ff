use std::f64::consts::E;

use crate::{Error, Result};

/// Convergence threshold on the Halley step, relative to `1 + |w|`.
pub const LAMBERT_TOL: f64 = 1e-14;
pub const LAMBERT_MAX_ITERS: usize = 50;

/// Principal branch W₀ of the Lambert W function for real `x ≥ -1/e`.
///
/// Halley iteration from a logarithmic starting point. The residual is
/// evaluated as `w - x·e^{-w}` so large arguments do not overflow.
pub fn lambert_w0(x: f64) -> Result<f64> {
    let branch_point = -1.0 / E;
    if !x.is_finite() {
        return Err(Error::domain("lambert_w0", format!("argument {x} is not finite")));
    }
    if x < branch_point {
        if x > branch_point - 1e-15 {
            return Ok(-1.0);
        }
        return Err(Error::domain("lambert_w0", format!("argument {x} < -1/e")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }

    let mut w = initial_guess(x);
    for _ in 0..LAMBERT_MAX_ITERS {
        let wp1 = w + 1.0;
        if wp1.abs() < 1e-300 {
            break;
        }
        let t = w - x * (-w).exp();
        let step = t / (wp1 - (w + 2.0) * t / (2.0 * wp1));
        w -= step;
        if step.abs() <= LAMBERT_TOL * (1.0 + w.abs()) {
            break;
        }
    }
    Ok(w)
}

fn initial_guess(x: f64) -> f64 {
    if x < -0.25 {
        // series about the branch point
        let p = (2.0 * (E * x + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x <= E {
        x.ln_1p()
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverts_w_exp_w() {
        for &w in &[0.0, 0.5, 1.0, 2.0, 5.0] {
            let x = w * f64::exp(w);
            assert!((lambert_w0(x).unwrap() - w).abs() < 1e-12, "w = {w}");
        }
    }

    #[test]
    fn known_values() {
        // omega constant
        assert!((lambert_w0(1.0).unwrap() - 0.567_143_290_409_783_8).abs() < 1e-15);
        assert!((lambert_w0(E).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(lambert_w0(-1.0 / E).unwrap(), -1.0);
    }

    #[test]
    fn negative_branch_and_large_arguments() {
        for &x in &[-0.36, -0.3, -0.2, -0.05, 1e-12, 1e3, 1e100, 1e300] {
            let w = lambert_w0(x).unwrap();
            let back = w * w.exp();
            assert!(((back - x) / x).abs() < 1e-12, "x = {x}, w = {w}");
        }
    }

    #[test]
    fn rejects_below_branch_point() {
        assert!(lambert_w0(-0.4).is_err());
        assert!(lambert_w0(f64::NAN).is_err());
    }
}
