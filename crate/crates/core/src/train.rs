//! Global updates and the variational EM driver.

use std::path::PathBuf;
#[cfg(not(target_arch = "wasm32"))]
use std::time::Instant;
#[cfg(target_arch = "wasm32")]
use web_time::Instant;

use ndarray::{Array2, Array3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alpha::{center_alpha_hat, update_alpha_hat, Penalty};
use crate::checkpoint::Checkpoint;
use crate::corpus::Corpus;
use crate::elbo::{compute_elbo, penalty_value, ElboBreakdown};
use crate::error::{DapError, Result};
use crate::inference::{
    accumulate_stats, infer_document_from, initial_state, DocElbo, DocVariational, EStepCache, PersonaSource,
    SuffStats, WarmStart,
};
use crate::kalman::{smooth_personas, ObservationMask};
use crate::model::{init_params_with_jitter, Hyperparams, ModelParams, DEFAULT_INIT_JITTER};

/// `δ_{a,p} = ω_p + Σ τ_{d,p}` over the author's documents.
pub fn update_delta(omega: &[f64], tau_author: &Array2<f64>) -> Array2<f64> {
    let mut out = tau_author.clone();
    for mut row in out.rows_mut() {
        row.iter_mut().zip(omega).for_each(|(d, w)| *d += w);
    }
    out
}

/// `β_{k,v} = (η + n_{k,v}) / Σ_v' (η + n_{k,v'})`.
pub fn update_beta(eta: f64, counts: &Array2<f64>) -> Array2<f64> {
    let mut out = counts.mapv(|c| c + eta);
    for mut row in out.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_em_iters: usize,
    /// Independent fits from seeds `seed, seed + 1, …`; the one with the
    /// highest final objective is returned.
    pub restarts: usize,
    /// Stop when the relative change of the objective falls below this.
    pub em_rel_tol: f64,
    pub seed: u64,
    /// Worker threads for the E-step; 0 uses every core.
    pub threads: usize,
    /// Write a checkpoint every this many iterations (0 disables).
    pub checkpoint_every: usize,
    pub checkpoint_path: Option<PathBuf>,
    pub init_jitter: f64,
    /// A persona is observed at step t when `Σ_d τ_{t,d,p}` exceeds this.
    pub observe_threshold: f64,
    /// Re-centre α̂ on the mean of μ₀ after every update.
    pub center_alpha_hat: bool,
    /// Start each document's coordinate ascent from its previous state.
    pub warm_start: bool,
    pub penalty: Penalty,
    /// Backtrack the α̂/Σ̂ step towards the previous values whenever it
    /// would lower the objective.
    pub safeguard_m_step: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_em_iters: 100,
            restarts: 1,
            em_rel_tol: 1e-4,
            seed: 0,
            threads: 1,
            checkpoint_every: 0,
            checkpoint_path: None,
            init_jitter: DEFAULT_INIT_JITTER,
            observe_threshold: ObservationMask::DEFAULT_THRESHOLD,
            center_alpha_hat: true,
            warm_start: true,
            safeguard_m_step: true,
            penalty: Penalty::Completed,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts < 1 {
            return Err(DapError::InvalidArgument("restarts must be at least 1".into()));
        }
        if self.max_em_iters < 1 {
            return Err(DapError::InvalidArgument("max_em_iters must be at least 1".into()));
        }
        if !(self.em_rel_tol > 0.0) {
            return Err(DapError::InvalidArgument("em_rel_tol must be positive".into()));
        }
        if !(self.init_jitter >= 0.0 && self.init_jitter.is_finite()) {
            return Err(DapError::InvalidArgument("init_jitter must be non-negative".into()));
        }
        Ok(())
    }
}

/// One line of the training trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub restart: usize,
    pub iter: usize,
    /// `ELBO − ρ r`.
    pub objective: f64,
    pub elbo: f64,
    pub regularizer: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub params: ModelParams,
    pub trace: Vec<TraceRecord>,
    pub converged: bool,
    /// Breakdown of the bound at the last recorded iteration.
    pub breakdown: ElboBreakdown,
}

/// Output of one pass over the documents.
#[derive(Clone, Debug)]
pub struct EStep {
    pub stats: SuffStats,
    pub states: Vec<DocVariational>,
    pub doc_elbos: Vec<DocElbo>,
}

/// Infer every document and reduce the statistics in document order, so the
/// result does not depend on how the work was scheduled.
pub fn e_step(
    corpus: &Corpus,
    params: &ModelParams,
    hyper: &Hyperparams,
    source: PersonaSource,
    warm: Option<&[WarmStart]>,
) -> Result<EStep> {
    let cache = EStepCache::new(params);
    let docs = corpus.docs();
    let results: Vec<Result<(DocVariational, DocElbo)>> = docs
        .par_iter()
        .enumerate()
        .map(|(i, doc)| {
            let ctx = cache.context(params, hyper, doc, source);
            let start = match warm {
                Some(w) => w[i].clone().into_state(&ctx, doc),
                None => initial_state(&ctx, doc),
            };
            infer_document_from(&ctx, doc, start).map(|(s, e, _)| (s, e))
        })
        .collect();

    let mut stats = SuffStats::new(
        params.num_topics(),
        params.vocab_size(),
        params.num_authors(),
        params.num_steps(),
        params.num_personas(),
    );
    let mut states = Vec::with_capacity(docs.len());
    let mut doc_elbos = Vec::with_capacity(docs.len());
    for (doc, r) in docs.iter().zip(results) {
        let (state, elbo) = r?;
        accumulate_stats(&mut stats, doc, &state, &elbo);
        states.push(state);
        doc_elbos.push(elbo);
    }
    Ok(EStep { stats, states, doc_elbos })
}

/// Per-step process variances σΔ_t.
pub fn process_vars(params: &ModelParams, hyper: &Hyperparams) -> Vec<f64> {
    (0..params.num_steps()).map(|t| params.process_var(hyper, t)).collect()
}

/// The part of the objective that depends on α̂ and Σ̂ for fixed document
/// states: the persona chain, the θ terms and the overlap penalty. Built
/// from E-step statistics alone.
pub fn alpha_objective(
    alpha_hat: &Array3<f64>,
    alpha_var: &Array3<f64>,
    stats: &SuffStats,
    hyper: &Hyperparams,
    process_var: &[f64],
    docs_per_step: &[usize],
    penalty: Penalty,
) -> f64 {
    let (t_len, p_len, k_len) = alpha_hat.dim();
    let mut total = 0.0;
    for t in 0..t_len {
        let prec = 1.0 / process_var[t];
        for p in 0..p_len {
            let s = stats.tau_sum_tp[[t, p]];
            let (mut diff, mut cross, mut sq, mut var) = (0.0, 0.0, 0.0, 0.0);
            for k in 0..k_len {
                let a = alpha_hat[[t, p, k]];
                let prev = if t == 0 { hyper.mu0[k] } else { alpha_hat[[t - 1, p, k]] };
                diff += (a - prev).powi(2);
                // Σ_d τ_{d,p} γ_{d,k} = Σ_d (γ_{d,k} − 1) τ_{d,p} + Σ_d τ_{d,p}
                cross += a * (stats.alpha_rhs[[t, p, k]] + s);
                sq += a * a;
                var += alpha_var[[t, p, k]];
            }
            total += -0.5 * prec * (diff + var) + prec * cross - 0.5 * prec * s * (sq + var);
        }
    }
    total - penalty_value(alpha_hat, docs_per_step, hyper.rho, process_var, penalty)
}

/// α̂ update, Kalman smoothing, δ and β updates from one E-step.
pub fn m_step(
    params: &mut ModelParams,
    stats: &SuffStats,
    hyper: &Hyperparams,
    config: &TrainConfig,
    docs_per_step: &[usize],
) -> Result<()> {
    let q = process_vars(params, hyper);
    let mut alpha_hat = update_alpha_hat(stats, &hyper.mu0, hyper.rho, docs_per_step, config.penalty)?;
    if config.center_alpha_hat {
        center_alpha_hat(&mut alpha_hat, &hyper.mu0);
    }
    let mask = ObservationMask::from_tau_sums(&stats.tau_sum_tp, config.observe_threshold);
    let smooth = |a: &Array3<f64>| smooth_personas(a, &mask, &q, hyper.measurement_noise, &hyper.mu0, hyper.sigma0);
    let track = smooth(&alpha_hat);
    let mut alpha = track.m_smooth;
    let mut alpha_var = track.v_smooth;

    if config.safeguard_m_step {
        let before = alpha_objective(&params.alpha_hat, &params.alpha_var, stats, hyper, &q, docs_per_step, config.penalty);
        let after = alpha_objective(&alpha_hat, &alpha_var, stats, hyper, &q, docs_per_step, config.penalty);
        if !(after >= before) {
            let (hat0, var0) = (params.alpha_hat.clone(), params.alpha_var.clone());
            let (dhat, dvar) = (&alpha_hat - &hat0, &alpha_var - &var0);
            let mut accepted = None;
            let mut step = 0.5;
            for _ in 0..MAX_BACKTRACK {
                let h = &hat0 + &(&dhat * step);
                let v = &var0 + &(&dvar * step);
                if alpha_objective(&h, &v, stats, hyper, &q, docs_per_step, config.penalty) >= before {
                    accepted = Some((h, v));
                    break;
                }
                step *= 0.5;
            }
            let (h, v) = accepted.unwrap_or((hat0, var0));
            log::debug!("alpha step shortened to {step}");
            alpha = smooth(&h).m_smooth;
            alpha_hat = h;
            alpha_var = v;
        }
    }

    params.alpha_hat = alpha_hat;
    params.alpha = alpha;
    params.alpha_var = alpha_var;
    params.delta = update_delta(&hyper.omega, &stats.tau_author);
    params.beta = update_beta(hyper.eta, &stats.beta_counts);
    Ok(())
}

const MAX_BACKTRACK: usize = 30;

/// Run `f` on a dedicated pool of `threads` workers (0 uses every core).
#[cfg(not(target_arch = "wasm32"))]
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    Ok(thread_pool(threads)?.install(f))
}

/// Browsers cannot spawn rayon workers; everything runs on the calling thread.
#[cfg(target_arch = "wasm32")]
pub fn with_threads<R: Send>(_threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    Ok(f())
}

#[cfg_attr(target_arch = "wasm32", allow(dead_code))]
fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| DapError::InvalidArgument(format!("thread pool: {e}")))
}

/// Fit the model with variational EM from a seeded random start.
pub fn train(corpus: &Corpus, hyper: &Hyperparams, config: &TrainConfig) -> Result<TrainResult> {
    train_with_observer(corpus, hyper, config, |_| {})
}

/// Like [`train`], calling `observe` after every iteration.
pub fn train_with_observer(
    corpus: &Corpus,
    hyper: &Hyperparams,
    config: &TrainConfig,
    mut observe: impl FnMut(&TraceRecord) + Send,
) -> Result<TrainResult> {
    hyper.validate()?;
    config.validate()?;
    if hyper.num_topics < 2 {
        return Err(DapError::InvalidArgument("training needs at least two topics".into()));
    }
    let mut best: Option<TrainResult> = None;
    for restart in 0..config.restarts {
        let seed = config.seed.wrapping_add(restart as u64);
        let params = init_params_with_jitter(corpus, hyper, seed, config.init_jitter)?;
        let fit = with_threads(config.threads, || run_em(corpus, hyper, config, params, restart, &mut observe))??;
        let score = |r: &TrainResult| r.trace.last().map_or(f64::NEG_INFINITY, |t| t.objective);
        if best.as_ref().is_none_or(|b| score(&fit) > score(b)) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn run_em(
    corpus: &Corpus,
    hyper: &Hyperparams,
    config: &TrainConfig,
    mut params: ModelParams,
    restart: usize,
    observe: &mut (dyn FnMut(&TraceRecord) + Send),
) -> Result<TrainResult> {
    let docs_per_step = corpus.docs_per_step();
    let mut warm: Option<Vec<WarmStart>> = None;
    let mut trace: Vec<TraceRecord> = Vec::new();
    let mut converged = false;
    let mut breakdown = ElboBreakdown::default();

    for iter in 1..=config.max_em_iters {
        let clock = Instant::now();
        let step = e_step(corpus, &params, hyper, PersonaSource::Observations, warm.as_deref())?;

        breakdown = compute_elbo(&step.stats.elbo, &params, hyper);
        if let Some(name) = breakdown.first_non_finite() {
            return Err(DapError::NonFinite(format!("ELBO term {name} at iteration {iter}")));
        }
        let regularizer = penalty_value(&params.alpha_hat, &docs_per_step, hyper.rho, &process_vars(&params, hyper), config.penalty);
        if !regularizer.is_finite() {
            return Err(DapError::NonFinite(format!("regularizer at iteration {iter}")));
        }
        let elbo = breakdown.total();
        let objective = elbo - regularizer;

        m_step(&mut params, &step.stats, hyper, config, &docs_per_step)?;
        if let Some(bad) = first_non_finite_param(&params) {
            return Err(DapError::NonFinite(format!("{bad} at iteration {iter}")));
        }
        if config.warm_start {
            warm = Some(step.states.iter().map(WarmStart::from_state).collect());
        }

        let record = TraceRecord { restart, iter, objective, elbo, regularizer, seconds: clock.elapsed().as_secs_f64() };
        log::info!("{}", serde_json::to_string(&record).unwrap_or_default());
        observe(&record);
        let prev = trace.last().map(|r| r.objective);
        trace.push(record);

        if config.checkpoint_every > 0 && iter % config.checkpoint_every == 0 {
            if let Some(path) = &config.checkpoint_path {
                Checkpoint::new(hyper.clone(), params.clone(), corpus).save(path)?;
            }
        }
        if let Some(prev) = prev {
            if ((objective - prev) / prev.abs()).abs() < config.em_rel_tol {
                converged = true;
                break;
            }
        }
    }
    Ok(TrainResult { params, trace, converged, breakdown })
}

fn first_non_finite_param(params: &ModelParams) -> Option<&'static str> {
    let fields: [(&'static str, bool); 5] = [
        ("beta", params.beta.iter().all(|x| x.is_finite())),
        ("alpha", params.alpha.iter().all(|x| x.is_finite())),
        ("alpha_var", params.alpha_var.iter().all(|x| x.is_finite())),
        ("alpha_hat", params.alpha_hat.iter().all(|x| x.is_finite())),
        ("delta", params.delta.iter().all(|x| x.is_finite())),
    ];
    fields.into_iter().find(|(_, ok)| !ok).map(|(n, _)| n)
}
