//! Persona responsibilities τ: exponentiated gradient on the simplex.

use ndarray::ArrayView2;

use super::DocContext;
use crate::error::{DapError, Result};
use crate::special::{digamma, log_sum_exp};

const EG_MAX_ITERS: usize = 50;
const EG_TOL: f64 = 1e-6;
const EG_STEP0: f64 = 0.1;
const TAU_FLOOR: f64 = 1e-300;

/// τ sub-problem. With the θ term written through the covariance of `α_t x`
/// the τ-dependent part is `Σ_p τ_p s_p − Σ_p τ_p log τ_p`, where
/// `s_p = E[log κ_p] + α̂_pᵀγ/Σ − (‖α̂_p‖² + Σ_k Σ̂_{p,k})/(2Σ)`.
#[derive(Clone, Debug)]
pub struct TauProblem {
    pub scores: Vec<f64>,
}

impl TauProblem {
    pub fn new(ctx: &DocContext<'_>, gamma: &[f64]) -> Self {
        let prec = 1.0 / ctx.process_var;
        let scores = (0..ctx.num_personas())
            .map(|p| {
                let a = ctx.persona_means.row(p);
                let cross: f64 = a.iter().zip(gamma).map(|(x, g)| x * g).sum();
                let sq: f64 = a.iter().map(|x| x * x).sum();
                let var: f64 = ctx.persona_var.map_or(0.0, |v| v.row(p).sum());
                ctx.elog_kappa[p] + prec * cross - 0.5 * prec * (sq + var)
            })
            .collect();
        Self { scores }
    }

    pub fn objective(&self, tau: &[f64]) -> f64 {
        tau.iter().zip(&self.scores).map(|(&t, s)| t * s - if t > 0.0 { t * t.ln() } else { 0.0 }).sum()
    }

    /// Unconstrained gradient `s_p − log τ_p − 1`.
    pub fn gradient(&self, tau: &[f64]) -> Result<Vec<f64>> {
        tau.iter()
            .zip(&self.scores)
            .enumerate()
            .map(|(p, (&t, s))| if t > 0.0 { Ok(s - t.ln() - 1.0) } else { Err(DapError::TauBoundary(p)) })
            .collect()
    }

    /// Exponentiated-gradient ascent from `start`. The step halves whenever
    /// the objective would drop and doubles (up to 1) after an accepted move.
    pub fn maximize(&self, start: &[f64]) -> Vec<f64> {
        let p = start.len();
        if p == 1 {
            return vec![1.0];
        }
        let mut tau: Vec<f64> = start.iter().map(|t| t.max(TAU_FLOOR)).collect();
        let mut f = self.objective(&tau);
        let mut step = EG_STEP0;
        let mut logits = vec![0.0; p];
        for _ in 0..EG_MAX_ITERS {
            let g = match self.gradient(&tau) {
                Ok(g) => g,
                Err(_) => break,
            };
            let mut next = None;
            while step > 1e-12 {
                for ((l, t), gi) in logits.iter_mut().zip(&tau).zip(&g) {
                    *l = t.ln() + step * gi;
                }
                let lse = log_sum_exp(&logits);
                let cand: Vec<f64> = logits.iter().map(|l| (l - lse).exp().max(TAU_FLOOR)).collect();
                let fc = self.objective(&cand);
                if fc >= f {
                    next = Some((cand, fc));
                    break;
                }
                step *= 0.5;
            }
            let Some((cand, fc)) = next else { break };
            let change = cand.iter().zip(&tau).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            tau = cand;
            f = fc;
            step = (2.0 * step).min(1.0);
            if change < EG_TOL {
                break;
            }
        }
        tau
    }
}

fn problem(
    delta_a: &[f64],
    gamma: &[f64],
    alpha_hat_t: ArrayView2<'_, f64>,
    alpha_var_t: Option<ArrayView2<'_, f64>>,
    sigma_t: f64,
) -> TauProblem {
    let total: f64 = delta_a.iter().sum();
    let elog: Vec<f64> = delta_a.iter().map(|&d| digamma(d) - digamma(total)).collect();
    let mu0 = vec![0.0; gamma.len()];
    let placeholder = ndarray::Array2::<f64>::zeros((0, 0));
    let ctx = DocContext {
        persona_means: alpha_hat_t,
        persona_var: alpha_var_t,
        process_var: sigma_t,
        elog_kappa: elog,
        log_beta: placeholder.view(),
        mu0: &mu0,
    };
    TauProblem::new(&ctx, gamma)
}

/// Gradient of the τ sub-problem (before projection onto the simplex).
pub fn tau_gradient(
    tau: &[f64],
    delta_a: &[f64],
    gamma: &[f64],
    alpha_hat_t: ArrayView2<'_, f64>,
    alpha_var_t: Option<ArrayView2<'_, f64>>,
    sigma_t: f64,
) -> Result<Vec<f64>> {
    problem(delta_a, gamma, alpha_hat_t, alpha_var_t, sigma_t).gradient(tau)
}

/// Maximise the τ sub-problem from `tau0`.
pub fn update_tau(
    tau0: &[f64],
    delta_a: &[f64],
    gamma: &[f64],
    alpha_hat_t: ArrayView2<'_, f64>,
    alpha_var_t: Option<ArrayView2<'_, f64>>,
    sigma_t: f64,
) -> Vec<f64> {
    problem(delta_a, gamma, alpha_hat_t, alpha_var_t, sigma_t).maximize(tau0)
}
