//! Held-out per-word log-likelihood.

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{DapError, Result};
use crate::inference::PersonaSource;
use crate::model::{Hyperparams, ModelParams};
use crate::train::e_step;

/// Distribution summary of per-document PWLL values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let (mean, sd) = mean_sd(&v);
        let q = |f: f64| {
            let pos = f * (v.len() - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
        };
        Some(Self { mean, sd, min: v[0], q25: q(0.25), median: q(0.5), q75: q(0.75), max: v[v.len() - 1] })
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// PWLL at one time step; `None` fields when the step has no test documents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepPwll {
    pub t: usize,
    pub pwll: Option<f64>,
    /// Standard deviation of the per-document values at this step.
    pub sd: Option<f64>,
    pub docs: usize,
    pub tokens: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pwll: f64,
    pub perplexity: f64,
    pub per_time_pwll: Vec<StepPwll>,
    pub per_doc_pwll: Summary,
    pub num_docs: usize,
    pub num_tokens: u64,
    /// Per-document bounds in corpus order.
    #[serde(skip)]
    pub doc_bounds: Vec<f64>,
}

impl EvalReport {
    /// `t,pwll,sd` rows for steps with test documents.
    pub fn per_time_csv(&self) -> String {
        let mut out = String::from("t,pwll,sd\n");
        for s in &self.per_time_pwll {
            if let (Some(p), Some(sd)) = (s.pwll, s.sd) {
                out.push_str(&format!("{},{},{}\n", s.t, p, sd));
            }
        }
        out
    }
}

/// Score a test corpus whose author registry matches the rows of `δ`
/// (as produced by [`crate::corpus::split_train_test`]). Each document is
/// inferred against the smoothed trajectories with globals frozen, and its
/// bound stands in for `log p(w_d)`.
pub fn heldout_pwll(test: &Corpus, params: &ModelParams, hyper: &Hyperparams) -> Result<EvalReport> {
    if test.num_docs() == 0 {
        return Err(DapError::EmptyTestSet);
    }
    if test.num_authors() != params.num_authors() {
        return Err(DapError::InvalidArgument(
            "test author registry does not match the model; use heldout_pwll_by_author".into(),
        ));
    }
    if test.num_steps() > params.num_steps() {
        return Err(DapError::InvalidArgument(format!(
            "test corpus has {} steps but the model was trained on {}",
            test.num_steps(),
            params.num_steps()
        )));
    }
    if test.vocab_size() != params.vocab_size() {
        return Err(DapError::InvalidArgument("test vocabulary size differs from the model".into()));
    }
    let step = e_step(test, params, hyper, PersonaSource::Smoothed, None)?;

    let bounds: Vec<f64> = step.doc_elbos.iter().map(|e| e.total()).collect();
    let tokens: Vec<u64> = test.docs().iter().map(|d| d.len() as u64).collect();
    let num_tokens: u64 = tokens.iter().sum();
    let pwll = bounds.iter().sum::<f64>() / num_tokens as f64;

    let per_doc: Vec<f64> = bounds.iter().zip(&tokens).map(|(b, &n)| b / n as f64).collect();
    let per_time_pwll = (0..test.num_steps())
        .map(|t| {
            let r = test.slice_range(t);
            let n: u64 = tokens[r.clone()].iter().sum();
            let (pwll, sd) = if r.is_empty() {
                (None, None)
            } else {
                (Some(bounds[r.clone()].iter().sum::<f64>() / n as f64), Some(mean_sd(&per_doc[r.clone()]).1))
            };
            StepPwll { t, pwll, sd, docs: r.len(), tokens: n }
        })
        .collect();

    Ok(EvalReport {
        pwll,
        perplexity: (-pwll).exp(),
        per_time_pwll,
        per_doc_pwll: Summary::of(&per_doc).expect("non-empty"),
        num_docs: test.num_docs(),
        num_tokens,
        doc_bounds: bounds,
    })
}

/// Like [`heldout_pwll`] for a test corpus with its own author registry.
/// Authors unknown to the model get `δ = ω`.
pub fn heldout_pwll_by_author(
    test: &Corpus,
    params: &ModelParams,
    hyper: &Hyperparams,
    model_authors: &[String],
) -> Result<EvalReport> {
    let mut aligned = params.clone();
    aligned.delta = ndarray::Array2::zeros((test.num_authors(), params.num_personas()));
    for (i, id) in test.authors().iter().enumerate() {
        let row = match model_authors.iter().position(|a| a == id) {
            Some(j) => params.delta.row(j).to_owned(),
            None => ndarray::Array1::from(hyper.omega.clone()),
        };
        aligned.delta.row_mut(i).assign(&row);
    }
    heldout_pwll(test, &aligned, hyper)
}
