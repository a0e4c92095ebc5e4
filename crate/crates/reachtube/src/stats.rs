//! Student-t upper-tail quantile.
//!
//! The quantile is pinned down by bisection on the CDF, which is evaluated
//! through the regularized incomplete beta function:
//! `CDF_t(q; k) = 1 − I_{k/(k+q²)}(k/2, 1/2) / 2` for `q ≥ 0`.

use crate::error::{ReachError, Result};
use statrs::function::beta::beta_reg;

/// CDF of the Student-t distribution with `dof` degrees of freedom.
pub fn student_t_cdf(x: f64, dof: usize) -> f64 {
    let k = dof as f64;
    let tail = 0.5 * beta_reg(k / 2.0, 0.5, k / (k + x * x));
    if x >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Upper-tail quantile: the value `q` with `Pr(T > q) = p`, i.e.
/// `CDF_t(q) = 1 − p`.
pub fn student_t_quantile(p: f64, dof: usize) -> Result<f64> {
    if dof < 1 {
        return Err(ReachError::InvalidInput(
            "Student-t quantile needs dof >= 1".into(),
        ));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(ReachError::InvalidInput(format!(
            "tail probability must be in (0, 1), got {p}"
        )));
    }
    if (p - 0.5).abs() < 1e-300 {
        return Ok(0.0);
    }
    let target = 1.0 - p;
    // Bracket the root; the CDF is strictly increasing.
    let mut lo = -1.0;
    let mut hi = 1.0;
    while student_t_cdf(lo, dof) > target {
        lo *= 2.0;
        if lo < -1e12 {
            break;
        }
    }
    while student_t_cdf(hi, dof) < target {
        hi *= 2.0;
        if hi > 1e12 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if student_t_cdf(mid, dof) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * (1.0 + hi.abs()) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
