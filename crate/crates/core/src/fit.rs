//! Weighted power-law fits in log-log coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Fitted power law `y = amplitude * x^slope` (the sign of the exponent is
/// fixed by the caller).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub amplitude: f64,
    pub window: (f64, f64),
    pub stderr_exponent: f64,
    pub r_squared: f64,
    pub bins: usize,
}

/// Minimum number of points a fit may use.
pub const MIN_BINS: usize = 5;

/// Weighted least squares of `ln y` on `ln x`, weights `1 / rel_err^2`.
///
/// Returns `(slope, intercept, stderr_slope, r_squared)`. Zero relative errors
/// are raised to the smallest positive one; if all are zero the fit is
/// unweighted. The slope error is scaled by the reduced chi-square.
pub(crate) fn loglog(x: &[f64], y: &[f64], rel_err: &[f64]) -> Result<(f64, f64, f64, f64)> {
    let n = x.len();
    if n < MIN_BINS {
        return invalid(format!("fit needs at least {MIN_BINS} points, got {n}"));
    }
    for (&xi, &yi) in x.iter().zip(y) {
        if !(xi > 0.0) {
            return invalid("fit abscissae must be positive");
        }
        if !(yi > 0.0) {
            return Err(Error::BelowNoiseFloor { k: xi, value: yi });
        }
    }
    let floor = rel_err.iter().copied().filter(|&e| e > 0.0).fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = rel_err
        .iter()
        .map(|&e| if floor.is_finite() { 1.0 / e.max(floor).powi(2) } else { 1.0 })
        .collect();
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let sw: f64 = w.iter().sum();
    let mx = w.iter().zip(&lx).map(|(w, v)| w * v).sum::<f64>() / sw;
    let my = w.iter().zip(&ly).map(|(w, v)| w * v).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let (dx, dy) = (lx[i] - mx, ly[i] - my);
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * dy;
        syy += w[i] * dy * dy;
    }
    if sxx <= 0.0 {
        return invalid("fit abscissae are all equal");
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let chi2: f64 = (0..n).map(|i| w[i] * (ly[i] - intercept - slope * lx[i]).powi(2)).sum();
    let se = (chi2 / (n - 2) as f64 / sxx).sqrt();
    let r2 = if syy > 0.0 { 1.0 - chi2 / syy } else { 1.0 };
    Ok((slope, intercept, se, r2))
}
