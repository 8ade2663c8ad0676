//! Special functions and small numeric helpers.

pub use statrs::function::gamma::{digamma, ln_gamma};

/// `log(sum(exp(x)))` without overflow.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `E[log x] = Ψ(a_i) − Ψ(Σa)` under `Dir(a)`.
pub fn dirichlet_expected_log(a: &[f64]) -> Vec<f64> {
    let total = digamma(a.iter().sum());
    a.iter().map(|&v| digamma(v) - total).collect()
}

/// `ln B(a) = Σ lnΓ(a_i) − lnΓ(Σa)`.
pub fn ln_multivariate_beta(a: &[f64]) -> f64 {
    a.iter().map(|&v| ln_gamma(v)).sum::<f64>() - ln_gamma(a.iter().sum())
}

/// Differential entropy of `Dir(a)`.
pub fn dirichlet_entropy(a: &[f64]) -> f64 {
    let a0: f64 = a.iter().sum();
    let k = a.len() as f64;
    ln_multivariate_beta(a) + (a0 - k) * digamma(a0) - a.iter().map(|&v| (v - 1.0) * digamma(v)).sum::<f64>()
}

/// `E_{Dir(q)}[log Dir(x; prior)]`.
pub fn dirichlet_expected_log_density(prior: &[f64], q: &[f64]) -> f64 {
    let elog = dirichlet_expected_log(q);
    -ln_multivariate_beta(prior) + prior.iter().zip(&elog).map(|(p, e)| (p - 1.0) * e).sum::<f64>()
}
