//! Corpus-level bound, its labelled breakdown, and the persona-overlap
//! penalty that turns it into the training objective.

use ndarray::{Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::alpha::Penalty;
use crate::inference::DocElbo;
use crate::model::{Hyperparams, ModelParams};
use crate::special::{dirichlet_entropy, dirichlet_expected_log_density, ln_gamma};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Full bound split into its terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ElboBreakdown {
    pub words: f64,
    pub topic_assignment: f64,
    pub phi_entropy: f64,
    pub theta: f64,
    pub theta_entropy: f64,
    pub persona: f64,
    pub tau_entropy: f64,
    /// `Σ_a E[log Dir(κ_a; ω)] + H[Dir(δ_a)]`
    pub kappa: f64,
    /// `Σ_k log Dir(β_k; η + 1)` at the point estimate β.
    pub beta_prior: f64,
    /// `Σ_{t,p} E[log N(α_{t,p}; α_{t−1,p}, Σ_t)]` with α̂ as the means.
    pub alpha_chain: f64,
}

impl ElboBreakdown {
    pub fn total(&self) -> f64 {
        self.documents() + self.kappa + self.beta_prior + self.alpha_chain
    }

    /// Sum of the per-document terms.
    pub fn documents(&self) -> f64 {
        self.words
            + self.topic_assignment
            + self.phi_entropy
            + self.theta
            + self.theta_entropy
            + self.persona
            + self.tau_entropy
    }

    /// The terms as `(label, value)` pairs.
    pub fn labelled(&self) -> [(&'static str, f64); 10] {
        [
            ("words", self.words),
            ("topic_assignment", self.topic_assignment),
            ("phi_entropy", self.phi_entropy),
            ("theta", self.theta),
            ("theta_entropy", self.theta_entropy),
            ("persona", self.persona),
            ("tau_entropy", self.tau_entropy),
            ("kappa", self.kappa),
            ("beta_prior", self.beta_prior),
            ("alpha_chain", self.alpha_chain),
        ]
    }

    /// Name of the first non-finite term, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.labelled().into_iter().find(|(_, v)| !v.is_finite()).map(|(n, _)| n)
    }
}

pub fn kappa_term(params: &ModelParams, hyper: &Hyperparams) -> f64 {
    params
        .delta
        .rows()
        .into_iter()
        .map(|d| {
            let d = d.to_vec();
            dirichlet_expected_log_density(&hyper.omega, &d) + dirichlet_entropy(&d)
        })
        .sum()
}

pub fn beta_prior_term(params: &ModelParams, hyper: &Hyperparams) -> f64 {
    let v = params.vocab_size() as f64;
    let norm = ln_gamma(v * (hyper.eta + 1.0)) - v * ln_gamma(hyper.eta + 1.0);
    params.beta.rows().into_iter().map(|row| norm + hyper.eta * row.iter().map(|b| b.ln()).sum::<f64>()).sum()
}

pub fn alpha_chain_term(params: &ModelParams, hyper: &Hyperparams) -> f64 {
    let (t_len, p_len, k_len) = params.alpha_hat.dim();
    let kf = k_len as f64;
    let mut total = 0.0;
    for t in 0..t_len {
        let prec = 1.0 / params.process_var(hyper, t);
        for p in 0..p_len {
            let mut sq = 0.0;
            for k in 0..k_len {
                let prev = if t == 0 { hyper.mu0[k] } else { params.alpha_hat[[t - 1, p, k]] };
                sq += (params.alpha_hat[[t, p, k]] - prev).powi(2);
            }
            let trace: f64 = params.alpha_var.index_axis(Axis(0), t).row(p).sum();
            total += 0.5 * kf * prec.ln() - 0.5 * kf * LN_2PI - 0.5 * prec * (sq + trace);
        }
    }
    total
}

/// Assemble the bound from summed per-document terms and the globals.
pub fn compute_elbo(docs: &DocElbo, params: &ModelParams, hyper: &Hyperparams) -> ElboBreakdown {
    ElboBreakdown {
        words: docs.words,
        topic_assignment: docs.topic_assignment,
        phi_entropy: docs.phi_entropy,
        theta: docs.theta,
        theta_entropy: docs.theta_entropy,
        persona: docs.persona,
        tau_entropy: docs.tau_entropy,
        kappa: kappa_term(params, hyper),
        beta_prior: beta_prior_term(params, hyper),
        alpha_chain: alpha_chain_term(params, hyper),
    }
}

/// `Σ_t Σ_{p≠q} (D_t/2) ρ α̂_{t,p}ᵀ Σ_t⁻¹ α̂_{t,q}` over ordered pairs.
pub fn regularizer_value(alpha_hat: &Array3<f64>, docs_per_step: &[usize], rho: f64, process_var: &[f64]) -> f64 {
    if rho == 0.0 {
        return 0.0;
    }
    let (t_len, p_len, _) = alpha_hat.dim();
    let mut total = 0.0;
    for t in 0..t_len {
        let slice = alpha_hat.index_axis(Axis(0), t);
        let mut cross = 0.0;
        for p in 0..p_len {
            for q in 0..p_len {
                if p != q {
                    cross += slice.row(p).dot(&slice.row(q));
                }
            }
        }
        total += 0.5 * docs_per_step[t] as f64 * rho * cross / process_var[t];
    }
    total
}

/// The penalty in the form selected by `penalty`.
pub fn penalty_value(alpha_hat: &Array3<f64>, docs_per_step: &[usize], rho: f64, process_var: &[f64], penalty: Penalty) -> f64 {
    let pairwise = regularizer_value(alpha_hat, docs_per_step, rho, process_var);
    if penalty == Penalty::Pairwise || rho == 0.0 {
        return pairwise;
    }
    let norms: f64 = alpha_hat
        .outer_iter()
        .enumerate()
        .map(|(t, slice)| 0.5 * docs_per_step[t] as f64 * rho * slice.iter().map(|a| a * a).sum::<f64>() / process_var[t])
        .sum();
    pairwise + norms
}
