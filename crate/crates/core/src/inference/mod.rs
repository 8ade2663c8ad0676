//! Per-document variational E-step.
//!
//! Each document carries a Gaussian `q(θ) = N(γ, diag(v̂))` over its topic
//! logits, word-topic responsibilities φ, persona responsibilities τ and the
//! auxiliary ζ that bounds the softmax normaliser. Coordinate ascent cycles
//! ζ → φ → γ → v̂ → τ; every step maximises (or, for γ and τ, does not
//! decrease) the per-document bound, so sweeps are monotone.

mod gamma;
mod stats;
mod tau;
mod vhat;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::Result;
use crate::model::{Hyperparams, ModelParams};
use crate::special::{dirichlet_expected_log, log_sum_exp};

pub use gamma::{gamma_gradient, update_gamma, GammaProblem, GAMMA_GRAD_TOL, GAMMA_MAX_ITERS};
pub use stats::{accumulate_stats, SuffStats};
pub use tau::{tau_gradient, update_tau, TauProblem};
pub use vhat::{update_vhat, vhat_residual, VHAT_BRACKET};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Sweep limits for [`infer_document`].
pub const MAX_SWEEPS: usize = 20;
pub const SWEEP_REL_TOL: f64 = 1e-6;

/// Everything a document needs from the global parameters at its time step.
#[derive(Clone, Debug)]
pub struct DocContext<'a> {
    /// P×K persona means at this step.
    pub persona_means: ArrayView2<'a, f64>,
    /// P×K variance of the persona means; `None` treats them as known points.
    pub persona_var: Option<ArrayView2<'a, f64>>,
    /// Σ_t = σΔ_t.
    pub process_var: f64,
    /// `E[log κ_a]` for the document's author, length P.
    pub elog_kappa: Vec<f64>,
    /// K×V elementwise log of β.
    pub log_beta: ArrayView2<'a, f64>,
    /// Starting value for γ.
    pub mu0: &'a [f64],
}

impl DocContext<'_> {
    pub fn num_topics(&self) -> usize {
        self.persona_means.ncols()
    }

    pub fn num_personas(&self) -> usize {
        self.persona_means.nrows()
    }

    fn precision(&self) -> f64 {
        1.0 / self.process_var
    }

    /// `A τ`: the τ-weighted combination of persona means.
    pub fn mixed_mean(&self, tau: &[f64]) -> Vec<f64> {
        let mut m = vec![0.0; self.num_topics()];
        for (p, row) in self.persona_means.rows().into_iter().enumerate() {
            for (mk, a) in m.iter_mut().zip(row) {
                *mk += tau[p] * a;
            }
        }
        m
    }

    /// `‖A_p‖² + Σ_k Σ̂_{p,k}` per persona.
    fn persona_second_moments(&self) -> Vec<f64> {
        (0..self.num_personas())
            .map(|p| {
                let mean_sq: f64 = self.persona_means.row(p).iter().map(|a| a * a).sum();
                let var: f64 = self.persona_var.map_or(0.0, |v| v.row(p).sum());
                mean_sq + var
            })
            .collect()
    }
}

/// Variational state of one document.
///
/// φ is stored per distinct term (rows follow `Document::terms`); repeated
/// tokens of one term share the same responsibilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocVariational {
    pub gamma: Vec<f64>,
    /// Per-topic variances v̂² of `q(θ)`.
    pub vhat: Vec<f64>,
    pub phi: Array2<f64>,
    pub tau: Vec<f64>,
    /// `log ζ`, kept in log space so large γ cannot overflow it.
    pub log_zeta: f64,
}

impl DocVariational {
    pub fn zeta(&self) -> f64 {
        self.log_zeta.exp()
    }

    /// Count-weighted column sums of φ: `Σ_n φ_{n,k}`.
    pub fn phi_colsums(&self, doc: &Document) -> Vec<f64> {
        let k = self.phi.ncols();
        let mut out = vec![0.0; k];
        for (row, &(_, c)) in self.phi.rows().into_iter().zip(&doc.terms) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += c as f64 * v;
            }
        }
        out
    }
}

/// Labelled per-document bound.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DocElbo {
    /// `E[log p(w | z, β)]`
    pub words: f64,
    /// `E[log p(z | π(θ))]`, softmax normaliser bounded through ζ
    pub topic_assignment: f64,
    pub phi_entropy: f64,
    /// `E[log p(θ | α x, Σ)]`
    pub theta: f64,
    pub theta_entropy: f64,
    /// `E[log p(x | κ)]`
    pub persona: f64,
    pub tau_entropy: f64,
}

impl DocElbo {
    pub fn total(&self) -> f64 {
        self.words + self.topic_assignment + self.phi_entropy + self.theta + self.theta_entropy + self.persona
            + self.tau_entropy
    }

    pub fn add(&mut self, o: &DocElbo) {
        self.words += o.words;
        self.topic_assignment += o.topic_assignment;
        self.phi_entropy += o.phi_entropy;
        self.theta += o.theta;
        self.theta_entropy += o.theta_entropy;
        self.persona += o.persona;
        self.tau_entropy += o.tau_entropy;
    }
}

/// `Σ_k exp(γ_k + v̂²_k/2)`. Use [`log_zeta`] when the exponents are large.
pub fn update_zeta(gamma: &[f64], vhat: &[f64]) -> f64 {
    log_zeta(gamma, vhat).exp()
}

pub fn log_zeta(gamma: &[f64], vhat: &[f64]) -> f64 {
    let e: Vec<f64> = gamma.iter().zip(vhat).map(|(g, v)| g + 0.5 * v).collect();
    let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max > 600.0 {
        log_sum_exp(&e)
    } else {
        e.iter().map(|x| x.exp()).sum::<f64>().ln()
    }
}

/// `φ_{n,k} ∝ exp(γ_k) β_{k,w_n}`, normalised in log space.
pub fn update_phi(gamma: &[f64], log_beta: ArrayView2<'_, f64>, terms: &[(u32, u32)]) -> Array2<f64> {
    let k = gamma.len();
    let mut phi = Array2::zeros((terms.len(), k));
    let mut buf = vec![0.0; k];
    for (mut row, &(v, _)) in phi.rows_mut().into_iter().zip(terms) {
        for (kk, b) in buf.iter_mut().enumerate() {
            *b = gamma[kk] + log_beta[[kk, v as usize]];
        }
        let lse = log_sum_exp(&buf);
        for (r, b) in row.iter_mut().zip(&buf) {
            *r = (b - lse).exp();
        }
    }
    phi
}

/// With a single topic π(θ) ≡ 1: the words carry no information about θ
/// and the softmax normaliser needs no bound.
fn effective_counts(doc_n: f64, k: usize) -> f64 {
    if k == 1 { 0.0 } else { doc_n }
}

/// Per-document bound for a given state.
pub fn doc_elbo(ctx: &DocContext<'_>, doc: &Document, state: &DocVariational) -> DocElbo {
    let k = ctx.num_topics();
    let n = doc.len() as f64;
    let prec = ctx.precision();

    let mut words = 0.0;
    let mut phi_entropy = 0.0;
    for (row, &(v, c)) in state.phi.rows().into_iter().zip(&doc.terms) {
        let c = c as f64;
        for (kk, &f) in row.iter().enumerate() {
            if f > 0.0 {
                words += c * f * ctx.log_beta[[kk, v as usize]];
                phi_entropy -= c * f * f.ln();
            }
        }
    }

    let colsums = state.phi_colsums(doc);
    let linear: f64 = colsums.iter().zip(&state.gamma).map(|(c, g)| c * g).sum();
    let topic_assignment = if k == 1 {
        linear - n * state.gamma[0]
    } else {
        let ratio: f64 = state
            .gamma
            .iter()
            .zip(&state.vhat)
            .map(|(g, v)| (g + 0.5 * v - state.log_zeta).exp())
            .sum();
        linear - n * (ratio - 1.0 + state.log_zeta)
    };

    let m = ctx.mixed_mean(&state.tau);
    let resid: f64 = state.gamma.iter().zip(&m).map(|(g, mk)| (g - mk).powi(2)).sum();
    let trace_v: f64 = state.vhat.iter().sum();
    // Tr S with S the covariance of α_t x under q
    let second = ctx.persona_second_moments();
    let trace_s: f64 =
        state.tau.iter().zip(&second).map(|(t, s)| t * s).sum::<f64>() - m.iter().map(|x| x * x).sum::<f64>();
    let kf = k as f64;
    let theta = 0.5 * kf * prec.ln() - 0.5 * kf * LN_2PI - 0.5 * prec * (resid + trace_v + trace_s);
    let theta_entropy = 0.5 * state.vhat.iter().map(|v| v.ln() + LN_2PI + 1.0).sum::<f64>();

    let persona = state.tau.iter().zip(&ctx.elog_kappa).map(|(t, e)| t * e).sum();
    let tau_entropy = -state.tau.iter().filter(|&&t| t > 0.0).map(|t| t * t.ln()).sum::<f64>();

    DocElbo { words, topic_assignment, phi_entropy, theta, theta_entropy, persona, tau_entropy }
}

/// Initial state: γ = μ₀, v̂² = 1, τ uniform, φ and ζ consistent with those.
pub fn initial_state(ctx: &DocContext<'_>, doc: &Document) -> DocVariational {
    let k = ctx.num_topics();
    let p = ctx.num_personas();
    let gamma = ctx.mu0.to_vec();
    let vhat = vec![1.0; k];
    let phi = update_phi(&gamma, ctx.log_beta, &doc.terms);
    let log_zeta = log_zeta(&gamma, &vhat);
    DocVariational { gamma, vhat, phi, tau: vec![1.0 / p as f64; p], log_zeta }
}

/// The parts of a document state worth carrying between EM iterations.
#[derive(Clone, Debug, PartialEq)]
pub struct WarmStart {
    pub gamma: Vec<f64>,
    pub vhat: Vec<f64>,
    pub tau: Vec<f64>,
}

impl WarmStart {
    pub fn from_state(state: &DocVariational) -> Self {
        Self { gamma: state.gamma.clone(), vhat: state.vhat.clone(), tau: state.tau.clone() }
    }

    pub fn into_state(self, ctx: &DocContext<'_>, doc: &Document) -> DocVariational {
        let phi = update_phi(&self.gamma, ctx.log_beta, &doc.terms);
        let log_zeta = log_zeta(&self.gamma, &self.vhat);
        DocVariational { gamma: self.gamma, vhat: self.vhat, phi, tau: self.tau, log_zeta }
    }
}

/// One coordinate-ascent sweep, ζ → φ → γ → v̂ → τ.
pub fn sweep(ctx: &DocContext<'_>, doc: &Document, state: &mut DocVariational) -> Result<()> {
    let k = ctx.num_topics();
    let n_eff = effective_counts(doc.len() as f64, k);

    state.log_zeta = log_zeta(&state.gamma, &state.vhat);
    state.phi = update_phi(&state.gamma, ctx.log_beta, &doc.terms);

    let colsums = if k == 1 { vec![0.0] } else { state.phi_colsums(doc) };
    let problem = GammaProblem {
        prior_mean: ctx.mixed_mean(&state.tau),
        precision: ctx.precision(),
        phi_colsums: colsums,
        n: n_eff,
        vhat: state.vhat.clone(),
        log_zeta: state.log_zeta,
    };
    state.gamma = problem.maximize(&state.gamma)?;

    state.vhat = vhat::solve_all(&state.gamma, &state.vhat, ctx.precision(), n_eff, state.log_zeta)?;

    let problem = TauProblem::new(ctx, &state.gamma);
    state.tau = problem.maximize(&state.tau);
    Ok(())
}

/// Coordinate ascent until the relative change of the bound drops below
/// [`SWEEP_REL_TOL`] or [`MAX_SWEEPS`] sweeps have run.
pub fn infer_document_with(ctx: &DocContext<'_>, doc: &Document) -> Result<(DocVariational, DocElbo)> {
    let (state, elbo, _) = infer_document_traced(ctx, doc)?;
    Ok((state, elbo))
}

/// Like [`infer_document_with`], also returning the bound after every sweep.
pub fn infer_document_traced(ctx: &DocContext<'_>, doc: &Document) -> Result<(DocVariational, DocElbo, Vec<f64>)> {
    infer_document_from(ctx, doc, initial_state(ctx, doc))
}

/// Coordinate ascent from a given state. ζ and φ are recomputed first, so
/// only γ, v̂ and τ of `state` matter.
pub fn infer_document_from(
    ctx: &DocContext<'_>,
    doc: &Document,
    mut state: DocVariational,
) -> Result<(DocVariational, DocElbo, Vec<f64>)> {
    let mut trace = Vec::with_capacity(MAX_SWEEPS);
    let mut elbo = DocElbo::default();
    for _ in 0..MAX_SWEEPS {
        sweep(ctx, doc, &mut state)?;
        elbo = doc_elbo(ctx, doc, &state);
        let total = elbo.total();
        let done = trace.last().is_some_and(|&prev: &f64| ((total - prev) / prev.abs().max(1e-300)).abs() < SWEEP_REL_TOL);
        trace.push(total);
        if done {
            break;
        }
    }
    Ok((state, elbo, trace))
}

/// Which persona means the E-step conditions on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PersonaSource {
    /// Variational observations α̂ with the smoothed variances; used in training.
    Observations,
    /// Smoothed trajectories α as fixed points; used for held-out scoring.
    Smoothed,
}

/// Precomputed per-iteration quantities shared by all documents.
#[derive(Clone, Debug)]
pub struct EStepCache {
    pub log_beta: Array2<f64>,
    /// A×P rows of `E[log κ_a]`.
    pub elog_kappa: Array2<f64>,
}

impl EStepCache {
    pub fn new(params: &ModelParams) -> Self {
        let log_beta = params.beta.mapv(f64::ln);
        let mut elog_kappa = Array2::zeros(params.delta.raw_dim());
        for (mut out, d) in elog_kappa.rows_mut().into_iter().zip(params.delta.rows()) {
            let e = dirichlet_expected_log(d.as_slice().unwrap_or(&d.to_vec()));
            out.iter_mut().zip(e).for_each(|(o, v)| *o = v);
        }
        Self { log_beta, elog_kappa }
    }

    pub fn context<'a>(
        &'a self,
        params: &'a ModelParams,
        hyper: &'a Hyperparams,
        doc: &Document,
        source: PersonaSource,
    ) -> DocContext<'a> {
        let t = doc.step;
        let (persona_means, persona_var) = match source {
            PersonaSource::Observations => (params.alpha_hat_at(t), Some(params.alpha_var_at(t))),
            PersonaSource::Smoothed => (params.alpha_at(t), None),
        };
        DocContext {
            persona_means,
            persona_var,
            process_var: params.process_var(hyper, t),
            elog_kappa: self.elog_kappa.row(doc.author).to_vec(),
            log_beta: self.log_beta.view(),
            mu0: &hyper.mu0,
        }
    }
}

/// Training-mode inference of one document against the current parameters.
pub fn infer_document(doc: &Document, params: &ModelParams, hyper: &Hyperparams) -> Result<(DocVariational, DocElbo)> {
    let cache = EStepCache::new(params);
    let ctx = cache.context(params, hyper, doc, PersonaSource::Observations);
    infer_document_with(&ctx, doc)
}

#[cfg(test)]
mod tests;
