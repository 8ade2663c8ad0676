//! Topic-logit variances v̂²: one safeguarded Newton solve per topic.

use crate::error::{DapError, Result};

/// Search interval for every v̂²_k.
pub const VHAT_BRACKET: (f64, f64) = (1e-10, 1e3);
const RESID_TOL: f64 = 1e-8;

/// Derivative of the bound with respect to v̂²_k:
/// `−1/(2Σ) + 1/(2v̂²) − N/(2ζ) exp(γ_k + v̂²/2)`.
pub fn vhat_residual(vhat_k: f64, gamma_k: f64, precision: f64, n: f64, log_zeta: f64) -> f64 {
    -0.5 * precision + 0.5 / vhat_k - expo(vhat_k, gamma_k, n, log_zeta)
}

fn expo(v: f64, g: f64, n: f64, log_zeta: f64) -> f64 {
    if n == 0.0 {
        0.0
    } else {
        0.5 * n * (g + 0.5 * v - log_zeta).exp()
    }
}

fn solve_one(gamma_k: f64, start: f64, precision: f64, n: f64, log_zeta: f64) -> Result<f64> {
    let r = |v: f64| vhat_residual(v, gamma_k, precision, n, log_zeta);
    let (mut lo, mut hi) = VHAT_BRACKET;
    // r is strictly decreasing, so a sign change at the ends brackets the root
    if !(r(lo) > 0.0) || !(r(hi) < 0.0) {
        return Err(DapError::VhatBracket);
    }
    let mut v = if start.is_finite() { start.clamp(lo, hi) } else { 1.0 };
    for _ in 0..200 {
        let fv = r(v);
        if fv.abs() < RESID_TOL {
            return Ok(v);
        }
        if fv > 0.0 {
            lo = v;
        } else {
            hi = v;
        }
        if hi - lo <= 4.0 * f64::EPSILON * v {
            return Ok(v);
        }
        let dr = -0.5 / (v * v) - 0.5 * expo(v, gamma_k, n, log_zeta);
        let newton = v - fv / dr;
        v = if newton.is_finite() && newton > lo && newton < hi { newton } else { (lo * hi).sqrt() };
    }
    Ok(v)
}

/// Solve every topic's stationarity condition, warm-started at `start`.
pub fn solve_all(gamma: &[f64], start: &[f64], precision: f64, n: f64, log_zeta: f64) -> Result<Vec<f64>> {
    gamma.iter().zip(start).map(|(&g, &s)| solve_one(g, s, precision, n, log_zeta)).collect()
}

/// Update all v̂² for fixed γ and ζ, starting from 1.
pub fn update_vhat(gamma: &[f64], sigma_t: f64, n_d: f64, zeta: f64) -> Result<Vec<f64>> {
    let start = vec![1.0; gamma.len()];
    solve_all(gamma, &start, 1.0 / sigma_t, n_d, zeta.ln())
}
