//! Topic-logit mean γ: preconditioned nonlinear conjugate gradient.
//!
//! With ζ and v̂² fixed the γ objective separates across topics and is
//! strictly concave, so a diagonal Newton preconditioner is exact up to the
//! coupling introduced by the line search.

use ndarray::ArrayView2;

use crate::error::{DapError, Result};

pub const GAMMA_MAX_ITERS: usize = 100;
pub const GAMMA_GRAD_TOL: f64 = 1e-4;

/// The γ sub-problem
/// `−½/Σ ‖γ − m‖² + cᵀγ − N Σ_k exp(γ_k + v̂²_k/2) / ζ`.
#[derive(Clone, Debug)]
pub struct GammaProblem {
    /// `m = α̂_t τ`.
    pub prior_mean: Vec<f64>,
    /// `1/Σ_t`.
    pub precision: f64,
    /// Count-weighted column sums of φ.
    pub phi_colsums: Vec<f64>,
    /// Document length N.
    pub n: f64,
    pub vhat: Vec<f64>,
    pub log_zeta: f64,
}

impl GammaProblem {
    fn expo(&self, k: usize, g: f64) -> f64 {
        if self.n == 0.0 {
            0.0
        } else {
            self.n * (g + 0.5 * self.vhat[k] - self.log_zeta).exp()
        }
    }

    pub fn objective(&self, gamma: &[f64]) -> f64 {
        gamma
            .iter()
            .enumerate()
            .map(|(k, &g)| {
                -0.5 * self.precision * (g - self.prior_mean[k]).powi(2) + self.phi_colsums[k] * g - self.expo(k, g)
            })
            .sum()
    }

    pub fn gradient(&self, gamma: &[f64]) -> Vec<f64> {
        gamma
            .iter()
            .enumerate()
            .map(|(k, &g)| -self.precision * (g - self.prior_mean[k]) + self.phi_colsums[k] - self.expo(k, g))
            .collect()
    }

    /// Negated Hessian diagonal (all entries positive).
    fn curvature(&self, gamma: &[f64]) -> Vec<f64> {
        gamma.iter().enumerate().map(|(k, &g)| self.precision + self.expo(k, g)).collect()
    }

    /// Maximise from `start`.
    pub fn maximize(&self, start: &[f64]) -> Result<Vec<f64>> {
        let mut x = start.to_vec();
        let mut f = self.objective(&x);
        if !f.is_finite() {
            return Err(DapError::GammaDiverged);
        }
        let mut g = self.gradient(&x);
        let mut z: Vec<f64> = g.iter().zip(self.curvature(&x)).map(|(gi, h)| gi / h).collect();
        let mut d = z.clone();
        for _ in 0..GAMMA_MAX_ITERS {
            if inf_norm(&g) < GAMMA_GRAD_TOL {
                break;
            }
            if dot(&g, &d) <= 0.0 {
                d.clone_from(&z);
            }
            let t = self.line_search(&x, &d);
            let x_new: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            let f_new = self.objective(&x_new);
            if !f_new.is_finite() || x_new.iter().any(|v| !v.is_finite()) {
                return Err(DapError::GammaDiverged);
            }
            if f_new < f {
                // no ascent along d; the line search already tried the
                // preconditioned gradient, so we are at numerical optimum
                break;
            }
            let g_new = self.gradient(&x_new);
            let z_new: Vec<f64> = g_new.iter().zip(self.curvature(&x_new)).map(|(gi, h)| gi / h).collect();
            let denom = dot(&z, &g);
            let diff: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
            let beta = if denom > 0.0 { (dot(&z_new, &diff) / denom).max(0.0) } else { 0.0 };
            d = z_new.iter().zip(&d).map(|(zi, di)| zi + beta * di).collect();
            x = x_new;
            f = f_new;
            g = g_new;
            z = z_new;
        }
        Ok(x)
    }

    /// Safeguarded 1-D Newton along `d` on the concave slice.
    fn line_search(&self, x: &[f64], d: &[f64]) -> f64 {
        let at = |t: f64| -> Vec<f64> { x.iter().zip(d).map(|(a, b)| a + t * b).collect() };
        let mut t = 0.0;
        let mut ft = self.objective(x);
        for _ in 0..50 {
            let p = at(t);
            let slope = dot(&self.gradient(&p), d);
            let curv: f64 = self.curvature(&p).iter().zip(d).map(|(h, di)| h * di * di).sum();
            if curv <= 0.0 || !slope.is_finite() {
                break;
            }
            let mut step = slope / curv;
            let mut accepted = false;
            for _ in 0..60 {
                let cand = self.objective(&at(t + step));
                if cand.is_finite() && cand >= ft {
                    t += step;
                    ft = cand;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted || step.abs() <= 1e-12 * (1.0 + t.abs()) {
                break;
            }
        }
        t
    }
}

/// Gradient of the γ sub-problem at `gamma`, with `m = α̂_t τ`.
#[allow(clippy::too_many_arguments)]
pub fn gamma_gradient(
    gamma: &[f64],
    vhat: &[f64],
    tau: &[f64],
    alpha_hat_t: ArrayView2<'_, f64>,
    sigma_t: f64,
    phi_colsums: &[f64],
    n_d: f64,
    zeta: f64,
) -> Vec<f64> {
    problem(vhat, tau, alpha_hat_t, sigma_t, phi_colsums, n_d, zeta).gradient(gamma)
}

/// Maximise the γ sub-problem starting at `gamma0`.
#[allow(clippy::too_many_arguments)]
pub fn update_gamma(
    gamma0: &[f64],
    vhat: &[f64],
    tau: &[f64],
    alpha_hat_t: ArrayView2<'_, f64>,
    sigma_t: f64,
    phi_colsums: &[f64],
    n_d: f64,
    zeta: f64,
) -> Result<Vec<f64>> {
    problem(vhat, tau, alpha_hat_t, sigma_t, phi_colsums, n_d, zeta).maximize(gamma0)
}

fn problem(
    vhat: &[f64],
    tau: &[f64],
    alpha_hat_t: ArrayView2<'_, f64>,
    sigma_t: f64,
    phi_colsums: &[f64],
    n_d: f64,
    zeta: f64,
) -> GammaProblem {
    let k = alpha_hat_t.ncols();
    let mut m = vec![0.0; k];
    for (p, row) in alpha_hat_t.rows().into_iter().enumerate() {
        for (mk, a) in m.iter_mut().zip(row) {
            *mk += tau[p] * a;
        }
    }
    GammaProblem {
        prior_mean: m,
        precision: 1.0 / sigma_t,
        phi_colsums: phi_colsums.to_vec(),
        n: n_d,
        vhat: vhat.to_vec(),
        log_zeta: zeta.ln(),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}
