//! Forward sampling of the generative process, for synthetic experiments.

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, Vocabulary};
use crate::error::{DapError, Result};
use crate::model::{softmax_pi, Hyperparams, ModelParams};
use crate::rng::{stream_rng, Stream};
use crate::special::log_sum_exp;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleShape {
    pub num_steps: usize,
    pub num_authors: usize,
    pub docs_per_author_per_step: usize,
    pub doc_length: usize,
    pub vocab_size: usize,
    /// Elapsed time per step; uniform 1.0 when `None`.
    pub schedule: Option<Vec<f64>>,
}

impl SampleShape {
    pub fn new(num_steps: usize, num_authors: usize, docs_per_author_per_step: usize, doc_length: usize, vocab_size: usize) -> Self {
        Self { num_steps, num_authors, docs_per_author_per_step, doc_length, vocab_size, schedule: None }
    }
}

/// Everything drawn while generating a corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    /// β and the persona chain α (with `alpha_hat = alpha`); δ is set to
    /// the posterior `ω + n_a κ_a` so the parameters can be scored directly.
    pub params: ModelParams,
    /// A×P author persona weights.
    pub kappa: Array2<f64>,
    /// Per document, in corpus order.
    pub persona: Vec<usize>,
    pub theta: Vec<Vec<f64>>,
    pub topics: Vec<Vec<usize>>,
}

impl SyntheticTruth {
    /// Persona each author draws most often from.
    pub fn author_persona(&self) -> Vec<usize> {
        self.kappa.rows().into_iter().map(|r| argmax(r.iter().copied())).collect()
    }
}

pub(crate) fn argmax(it: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in it.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Dirichlet draw computed in log space, so very small concentrations do
/// not collapse to an all-zero vector. Entries are floored at the smallest
/// positive normal float.
pub fn sample_dirichlet<R: Rng + ?Sized>(rng: &mut R, alpha: &[f64]) -> Vec<f64> {
    // X ~ Gamma(a) equals Gamma(a + 1) · U^{1/a} in law
    let logs: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            let g: f64 = Gamma::new(a + 1.0, 1.0).expect("positive shape").sample(rng);
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            g.ln() + u.ln() / a
        })
        .collect();
    let lse = log_sum_exp(&logs);
    let mut out: Vec<f64> = logs.iter().map(|l| (l - lse).exp().max(f64::MIN_POSITIVE)).collect();
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= s);
    out
}

/// Draw an index from a probability vector.
pub fn sample_categorical<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, var: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    mean + var.sqrt() * z
}

/// Synthetic vocabulary `w0000, w0001, …`.
pub fn synthetic_vocab(v: usize) -> Vocabulary {
    Vocabulary::from_terms((0..v).map(|i| format!("w{i:04}")).collect()).expect("distinct terms")
}

/// Sample a corpus and its latents. `initial_alpha` (P×K), when given,
/// replaces the draw of the pre-chain state from `N(μ₀, Σ₀)`.
pub fn sample_corpus(
    hyper: &Hyperparams,
    shape: &SampleShape,
    seed: u64,
    initial_alpha: Option<&Array2<f64>>,
) -> Result<(Corpus, SyntheticTruth)> {
    hyper.validate()?;
    let (k, p) = (hyper.num_topics, hyper.num_personas);
    let (t_len, a_len, v) = (shape.num_steps, shape.num_authors, shape.vocab_size);
    if t_len == 0 || a_len == 0 || shape.docs_per_author_per_step == 0 || shape.doc_length == 0 || v == 0 {
        return Err(DapError::InvalidArgument("sample shape must be positive".into()));
    }
    let schedule = shape.schedule.clone().unwrap_or_else(|| vec![1.0; t_len]);
    if schedule.len() != t_len || schedule.iter().any(|&d| !(d > 0.0)) {
        return Err(DapError::InvalidArgument("schedule must have T positive entries".into()));
    }
    if let Some(a) = initial_alpha {
        if a.dim() != (p, k) {
            return Err(DapError::InvalidArgument("initial alpha must be P×K".into()));
        }
    }
    let mut rng = stream_rng(seed, Stream::Sampler);

    let mut beta = Array2::zeros((k, v));
    for mut row in beta.rows_mut() {
        let draw = sample_dirichlet(&mut rng, &vec![hyper.eta; v]);
        row.iter_mut().zip(draw).for_each(|(b, d)| *b = d);
    }
    let mut kappa = Array2::zeros((a_len, p));
    for mut row in kappa.rows_mut() {
        let draw = sample_dirichlet(&mut rng, &hyper.omega);
        row.iter_mut().zip(draw).for_each(|(b, d)| *b = d);
    }

    let mut alpha = Array3::zeros((t_len, p, k));
    for pp in 0..p {
        for kk in 0..k {
            let mut prev = match initial_alpha {
                Some(a) => a[[pp, kk]],
                None => normal(&mut rng, hyper.mu0[kk], hyper.sigma0),
            };
            for t in 0..t_len {
                prev = normal(&mut rng, prev, hyper.process_noise * schedule[t]);
                alpha[[t, pp, kk]] = prev;
            }
        }
    }

    let mut docs = Vec::new();
    let mut truth_persona = Vec::new();
    let mut truth_theta = Vec::new();
    let mut truth_topics = Vec::new();
    let mut counts_per_author = vec![0usize; a_len];
    let mut counts = vec![0u32; v];
    for t in 0..t_len {
        let var = hyper.process_noise * schedule[t];
        for a in 0..a_len {
            for _ in 0..shape.docs_per_author_per_step {
                let x = sample_categorical(&mut rng, kappa.row(a).as_slice().unwrap_or(&kappa.row(a).to_vec()));
                let theta: Vec<f64> = (0..k).map(|kk| normal(&mut rng, alpha[[t, x, kk]], var)).collect();
                let pi = softmax_pi(&theta);
                counts.iter_mut().for_each(|c| *c = 0);
                let mut z = Vec::with_capacity(shape.doc_length);
                for _ in 0..shape.doc_length {
                    let topic = sample_categorical(&mut rng, &pi);
                    let w = sample_categorical(&mut rng, beta.row(topic).as_slice().unwrap_or(&beta.row(topic).to_vec()));
                    counts[w] += 1;
                    z.push(topic);
                }
                let terms = counts.iter().enumerate().filter(|(_, &c)| c > 0).map(|(w, &c)| (w as u32, c)).collect();
                docs.push(Document::new(a, t, terms));
                truth_persona.push(x);
                truth_theta.push(theta);
                truth_topics.push(z);
                counts_per_author[a] += 1;
            }
        }
    }

    let authors = (0..a_len).map(|a| format!("a{a:03}")).collect();
    let corpus = Corpus::new(synthetic_vocab(v), authors, schedule.clone(), docs)?;

    let mut delta = kappa.clone();
    for (mut row, &n) in delta.rows_mut().into_iter().zip(&counts_per_author) {
        row.iter_mut().zip(&hyper.omega).for_each(|(d, w)| *d = w + n as f64 * *d);
    }
    let params = ModelParams {
        beta,
        alpha_hat: alpha.clone(),
        alpha_var: Array3::from_elem((t_len, p, k), hyper.measurement_noise),
        alpha,
        delta,
        schedule,
    };
    Ok((corpus, SyntheticTruth { params, kappa, persona: truth_persona, theta: truth_theta, topics: truth_topics }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> (Hyperparams, SampleShape) {
        (Hyperparams::new(4, 2), SampleShape::new(3, 5, 2, 50, 30))
    }

    #[test]
    fn every_document_has_requested_length() {
        let (h, s) = small();
        let (c, truth) = sample_corpus(&h, &s, 1, None).unwrap();
        assert_eq!(c.num_docs(), 3 * 5 * 2);
        assert!(c.docs().iter().all(|d| d.len() == 50));
        assert!(truth.topics.iter().all(|z| z.len() == 50));
        truth.params.validate().unwrap();
    }

    #[test]
    fn frozen_chain_stays_at_prior_mean() {
        let (mut h, s) = small();
        h.process_noise = 1e-300;
        h.sigma0 = 1e-300;
        h.mu0 = vec![0.5, -1.0, 2.0, 0.0];
        let (_, truth) = sample_corpus(&h, &s, 2, None).unwrap();
        for ((_, _, k), a) in truth.params.alpha.indexed_iter() {
            assert!((a - h.mu0[k]).abs() < 1e-100);
        }
    }

    #[test]
    fn latents_consistent() {
        let (h, s) = small();
        let (c, truth) = sample_corpus(&h, &s, 3, None).unwrap();
        for (i, doc) in c.docs().iter().enumerate() {
            assert!(truth.persona[i] < h.num_personas);
            assert!(truth.theta[i].iter().all(|x| x.is_finite()));
            let mut n = vec![0u32; s.vocab_size];
            for &(w, cnt) in &doc.terms {
                n[w as usize] = cnt;
            }
            assert_eq!(n.iter().sum::<u32>() as usize, truth.topics[i].len());
        }
    }

    #[test]
    fn deterministic() {
        let (h, s) = small();
        assert_eq!(sample_corpus(&h, &s, 9, None).unwrap(), sample_corpus(&h, &s, 9, None).unwrap());
    }

    #[test]
    fn term_frequencies_within_binomial_band() {
        let (h, s) = small();
        let (_, truth) = sample_corpus(&h, &s, 4, None).unwrap();
        let row = truth.params.beta.row(1).to_vec();
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = vec![0usize; row.len()];
        for _ in 0..n {
            counts[sample_categorical(&mut rng, &row)] += 1;
        }
        for (c, p) in counts.iter().zip(&row) {
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - n as f64 * p).abs() <= 3.0 * sd + 1e-9, "count {c} vs p {p}");
        }
    }

    #[test]
    fn tiny_concentration_dirichlet_is_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let d = sample_dirichlet(&mut rng, &[0.001; 50]);
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(d.iter().all(|&x| x > 0.0));
        }
    }
}
