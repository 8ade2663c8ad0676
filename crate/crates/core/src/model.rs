//! Hyperparameters, global parameters and the softmax map.

use ndarray::{Array2, Array3, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{DapError, Result};
use crate::rng::{stream_rng, Stream};

/// Fixed (not learned) model hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Number of topics K.
    pub num_topics: usize,
    /// Number of personas P.
    pub num_personas: usize,
    /// Topic-word smoothing η.
    pub eta: f64,
    /// Author-persona Dirichlet prior ω, length P.
    pub omega: Vec<f64>,
    /// Prior mean of the persona trajectories, length K.
    pub mu0: Vec<f64>,
    /// Prior variance scale of the initial persona state.
    pub sigma0: f64,
    /// Brownian process noise σ; step t has variance σΔ_t.
    pub process_noise: f64,
    /// Measurement noise of the variational observations in the Kalman filter.
    pub measurement_noise: f64,
    /// Weight ρ of the persona inner-product penalty.
    pub rho: f64,
}

impl Hyperparams {
    pub fn new(num_topics: usize, num_personas: usize) -> Self {
        Self {
            num_topics,
            num_personas,
            eta: 0.01,
            omega: vec![0.1; num_personas],
            mu0: vec![0.0; num_topics],
            sigma0: 1.0,
            process_noise: 0.5,
            measurement_noise: 0.05,
            rho: 0.2,
        }
    }

    /// K ≥ 1 is accepted here so that degenerate single-topic models can be
    /// scored; training additionally requires K ≥ 2.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(DapError::InvalidArgument(m.to_string()));
        if self.num_topics < 1 || self.num_personas < 1 {
            return bad("need at least one topic and one persona");
        }
        if self.omega.len() != self.num_personas || self.omega.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return bad("omega must have length P with positive entries");
        }
        if self.mu0.len() != self.num_topics || self.mu0.iter().any(|m| !m.is_finite()) {
            return bad("mu0 must have length K with finite entries");
        }
        for (name, v) in [
            ("eta", self.eta),
            ("sigma0", self.sigma0),
            ("process noise", self.process_noise),
            ("measurement noise", self.measurement_noise),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive"));
            }
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return bad("rho must be finite and non-negative");
        }
        if self.rho > 0.5 {
            log::warn!("rho = {} is above 0.5; personas may overfit single topics", self.rho);
        }
        Ok(())
    }
}

/// Global variational parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// K×V, rows on the simplex.
    pub beta: Array2<f64>,
    /// T×P×K smoothed persona trajectories.
    pub alpha: Array3<f64>,
    /// T×P×K smoothed variances.
    pub alpha_var: Array3<f64>,
    /// T×P×K variational observations; only meaningful during training.
    pub alpha_hat: Array3<f64>,
    /// A×P author-persona Dirichlet parameters.
    pub delta: Array2<f64>,
    /// Elapsed time per step.
    pub schedule: Vec<f64>,
}

impl ModelParams {
    pub fn num_topics(&self) -> usize {
        self.beta.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.beta.ncols()
    }

    pub fn num_steps(&self) -> usize {
        self.alpha.shape()[0]
    }

    pub fn num_personas(&self) -> usize {
        self.alpha.shape()[1]
    }

    pub fn num_authors(&self) -> usize {
        self.delta.nrows()
    }

    /// Σ_t as a scalar: σΔ_t.
    pub fn process_var(&self, hyper: &Hyperparams, t: usize) -> f64 {
        hyper.process_noise * self.schedule[t]
    }

    pub fn alpha_at(&self, t: usize) -> ArrayView2<'_, f64> {
        self.alpha.index_axis(ndarray::Axis(0), t)
    }

    pub fn alpha_hat_at(&self, t: usize) -> ArrayView2<'_, f64> {
        self.alpha_hat.index_axis(ndarray::Axis(0), t)
    }

    pub fn alpha_var_at(&self, t: usize) -> ArrayView2<'_, f64> {
        self.alpha_var.index_axis(ndarray::Axis(0), t)
    }

    /// Check the structural invariants, naming the first violated one.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DapError::InvalidArgument(m));
        for (k, row) in self.beta.rows().into_iter().enumerate() {
            let s: f64 = row.sum();
            if (s - 1.0).abs() > 1e-10 || row.iter().any(|&b| !(b > 0.0)) {
                return bad(format!("beta row {k} is not a strictly positive distribution"));
            }
        }
        if self.alpha_var.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return bad("alpha_var must be positive".into());
        }
        if self.delta.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return bad("delta must be positive".into());
        }
        if self.alpha.iter().chain(self.alpha_hat.iter()).any(|a| !a.is_finite()) {
            return bad("alpha must be finite".into());
        }
        if self.schedule.len() != self.num_steps() {
            return bad("schedule length must equal the number of steps".into());
        }
        Ok(())
    }
}

/// Numerically stable softmax π(θ).
pub fn softmax_pi(theta: &[f64]) -> Vec<f64> {
    let m = theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = theta.iter().map(|&x| (x - m).exp()).collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= z);
    out
}

/// Initial jitter on the persona trajectories.
pub const DEFAULT_INIT_JITTER: f64 = 0.01;

/// Random initialisation: each document's counts are dealt to a random
/// topic to seed β; each persona starts at μ₀ plus a Gaussian offset held
/// constant over time; δ = ω.
pub fn init_params(corpus: &Corpus, hyper: &Hyperparams, seed: u64) -> Result<ModelParams> {
    init_params_with_jitter(corpus, hyper, seed, DEFAULT_INIT_JITTER)
}

pub fn init_params_with_jitter(corpus: &Corpus, hyper: &Hyperparams, seed: u64, jitter: f64) -> Result<ModelParams> {
    hyper.validate()?;
    if corpus.num_docs() == 0 {
        return Err(DapError::EmptyCorpus);
    }
    let (k, p, v, t) = (hyper.num_topics, hyper.num_personas, corpus.vocab_size(), corpus.num_steps());
    let mut rng = stream_rng(seed, Stream::Init);

    let mut counts = Array2::<f64>::zeros((k, v));
    for doc in corpus.docs() {
        let topic = rng.random_range(0..k);
        for &(w, c) in &doc.terms {
            counts[[topic, w as usize]] += c as f64;
        }
    }
    let beta = crate::train::update_beta(hyper.eta, &counts);

    // one offset per persona, shared by every step, so labels line up in time
    let offsets = Array2::from_shape_fn((p, k), |_| jitter * rng.sample::<f64, _>(StandardNormal));
    let alpha_hat = Array3::from_shape_fn((t, p, k), |(_, pp, kk)| hyper.mu0[kk] + offsets[[pp, kk]]);
    let alpha = alpha_hat.clone();
    let alpha_var = Array3::from_elem((t, p, k), hyper.measurement_noise);
    let delta = Array2::from_shape_fn((corpus.num_authors(), p), |(_, j)| hyper.omega[j]);
    Ok(ModelParams { beta, alpha, alpha_var, alpha_hat, delta, schedule: corpus.delta().to_vec() })
}
