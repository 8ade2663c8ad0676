//! Browser bindings: Kalman smoothing of a single chain, sampled persona
//! trajectories, and a small end-to-end fit on synthetic data.

use dap_core::kalman::{filter_chain, smooth_chain};
use dap_core::model::{softmax_pi, Hyperparams};
use dap_core::report::{matched_accuracy, mean_pairwise_cosine};
use dap_core::sampler::{sample_corpus, SampleShape};
use dap_core::train::{train, TrainConfig};
use ndarray::{Array2, Array3, Axis};
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Curves {
    filtered_mean: Vec<f64>,
    filtered_var: Vec<f64>,
    smoothed_mean: Vec<f64>,
    smoothed_var: Vec<f64>,
}

#[wasm_bindgen]
impl Curves {
    #[wasm_bindgen(getter)]
    pub fn filtered_mean(&self) -> Vec<f64> {
        self.filtered_mean.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn filtered_var(&self) -> Vec<f64> {
        self.filtered_var.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn smoothed_mean(&self) -> Vec<f64> {
        self.smoothed_mean.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn smoothed_var(&self) -> Vec<f64> {
        self.smoothed_var.clone()
    }
}

/// Filter and smooth one chain. `observed[t] == 0` marks a missing step.
#[wasm_bindgen]
pub fn kalman_curves(
    obs: &[f64],
    observed: &[u8],
    process_var: f64,
    measurement_noise: f64,
    mu0: f64,
    sigma0: f64,
) -> Result<Curves, JsError> {
    if observed.len() != obs.len() {
        return Err(js_err("obs and observed differ in length"));
    }
    if !(process_var > 0.0 && measurement_noise > 0.0 && sigma0 > 0.0) {
        return Err(js_err("variances must be positive"));
    }
    let seen: Vec<bool> = observed.iter().map(|&o| o != 0).collect();
    let q = vec![process_var; obs.len()];
    let track = filter_chain(obs, &seen, &q, measurement_noise, mu0, sigma0);
    let (smoothed_mean, smoothed_var) = smooth_chain(&track, &q);
    Ok(Curves { filtered_mean: track.m, filtered_var: track.v, smoothed_mean, smoothed_var })
}

/// Persona trajectories as T×P×K arrays, flattened row-major.
#[wasm_bindgen]
#[derive(Clone)]
pub struct Trajectories {
    steps: usize,
    personas: usize,
    topics: usize,
    alpha: Vec<f64>,
    proportions: Vec<f64>,
}

#[wasm_bindgen]
impl Trajectories {
    #[wasm_bindgen(getter)]
    pub fn steps(&self) -> usize {
        self.steps
    }

    #[wasm_bindgen(getter)]
    pub fn personas(&self) -> usize {
        self.personas
    }

    #[wasm_bindgen(getter)]
    pub fn topics(&self) -> usize {
        self.topics
    }

    #[wasm_bindgen(getter)]
    pub fn alpha(&self) -> Vec<f64> {
        self.alpha.clone()
    }

    /// Softmax of each α_{t,p}.
    #[wasm_bindgen(getter)]
    pub fn proportions(&self) -> Vec<f64> {
        self.proportions.clone()
    }
}

impl Trajectories {
    fn from_alpha(alpha: &Array3<f64>) -> Self {
        let (steps, personas, topics) = alpha.dim();
        let mut proportions = Vec::with_capacity(alpha.len());
        for t in 0..steps {
            for p in 0..personas {
                let row: Vec<f64> = (0..topics).map(|k| alpha[[t, p, k]]).collect();
                proportions.extend(softmax_pi(&row));
            }
        }
        Self { steps, personas, topics, alpha: alpha.iter().copied().collect(), proportions }
    }
}

/// Draw persona trajectories from the Brownian prior.
#[wasm_bindgen]
pub fn sample_trajectories(
    topics: usize,
    personas: usize,
    steps: usize,
    process_noise: f64,
    seed: u64,
) -> Result<Trajectories, JsError> {
    let mut hyper = Hyperparams::new(topics, personas);
    hyper.process_noise = process_noise;
    let (_, truth) = sample_corpus(&hyper, &SampleShape::new(steps, 1, 1, 1, 2), seed, None).map_err(js_err)?;
    Ok(Trajectories::from_alpha(&truth.params.alpha))
}

#[wasm_bindgen]
pub struct ToyFit {
    objective: Vec<f64>,
    accuracy: f64,
    cosine: f64,
    converged: bool,
    truth: Trajectories,
    fitted: Trajectories,
}

#[wasm_bindgen]
impl ToyFit {
    /// Surrogate objective after every EM iteration.
    #[wasm_bindgen(getter)]
    pub fn objective(&self) -> Vec<f64> {
        self.objective.clone()
    }

    /// Author-persona accuracy under the best persona matching.
    #[wasm_bindgen(getter)]
    pub fn accuracy(&self) -> f64 {
        self.accuracy
    }

    /// Mean pairwise cosine between fitted trajectories.
    #[wasm_bindgen(getter)]
    pub fn cosine(&self) -> f64 {
        self.cosine
    }

    #[wasm_bindgen(getter)]
    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn truth(&self) -> Trajectories {
        self.truth.clone()
    }

    /// Fitted trajectories with personas reordered to match the truth.
    pub fn fitted(&self) -> Trajectories {
        self.fitted.clone()
    }
}

/// Sample a small corpus with one dominant topic per persona and fit it.
#[wasm_bindgen]
pub fn toy_fit(seed: u64, rho: f64, max_iters: usize) -> Result<ToyFit, JsError> {
    let (k, p) = (4, 2);
    let mut hyper = Hyperparams::new(k, p);
    let mut init = Array2::zeros((p, k));
    for pp in 0..p {
        init[[pp, pp]] = 4.0;
    }
    let (corpus, truth) = sample_corpus(&hyper, &SampleShape::new(6, 30, 1, 30, 60), seed, Some(&init)).map_err(js_err)?;
    hyper.rho = rho;
    let config = TrainConfig { max_em_iters: max_iters, seed, ..Default::default() };
    let fit = train(&corpus, &hyper, &config).map_err(js_err)?;
    let (accuracy, matching) = matched_accuracy(&fit.params.delta, &truth.author_persona(), p);
    let mut fitted = Array3::zeros(truth.params.alpha.raw_dim());
    for (fp, &tp) in matching.iter().enumerate() {
        if tp < p {
            fitted.index_axis_mut(Axis(1), tp).assign(&fit.params.alpha.index_axis(Axis(1), fp));
        }
    }
    Ok(ToyFit {
        objective: fit.trace.iter().map(|r| r.objective).collect(),
        accuracy,
        cosine: mean_pairwise_cosine(&fit.params),
        converged: fit.converged,
        truth: Trajectories::from_alpha(&truth.params.alpha),
        fitted: Trajectories::from_alpha(&fitted),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curves_have_chain_length() {
        let c = kalman_curves(&[0.0, 1.0, 0.5, 2.0], &[1, 1, 0, 1], 0.5, 0.1, 0.0, 1.0).unwrap();
        assert_eq!(c.smoothed_mean().len(), 4);
        assert_eq!(c.filtered_mean()[3], c.smoothed_mean()[3]);
        assert!(c.smoothed_var().iter().zip(c.filtered_var()).all(|(s, f)| *s <= f + 1e-12));
    }

    #[test]
    fn trajectories_are_seeded_simplices() {
        let a = sample_trajectories(3, 2, 5, 0.5, 4).unwrap();
        let b = sample_trajectories(3, 2, 5, 0.5, 4).unwrap();
        assert_eq!(a.alpha(), b.alpha());
        assert_eq!(a.proportions().len(), 5 * 2 * 3);
        for chunk in a.proportions().chunks(3) {
            assert!((chunk.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn toy_fit_recovers_personas() {
        let f = toy_fit(1, 0.2, 60).unwrap();
        assert!(!f.objective().is_empty());
        assert!(f.accuracy() >= 0.8, "accuracy {}", f.accuracy());
        assert_eq!(f.fitted().alpha().len(), f.truth().alpha().len());
    }
}
