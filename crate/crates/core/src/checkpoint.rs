//! Model checkpoints.
//!
//! A checkpoint is a single JSON object:
//!
//! ```text
//! { "format": "dap-checkpoint", "version": 1,
//!   "hyper":  { num_topics, num_personas, eta, omega, mu0, sigma0,
//!               process_noise, measurement_noise, rho },
//!   "params": { beta, alpha, alpha_var, alpha_hat, delta, schedule },
//!   "authors": [..], "vocab": [..] }
//! ```
//!
//! Arrays use ndarray's serde layout (`{"v":1,"dim":[..],"data":[..]}`,
//! row-major). Floats are written with round-trip precision.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Vocabulary};
use crate::error::{DapError, Result};
use crate::model::{Hyperparams, ModelParams};

pub const FORMAT: &str = "dap-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub hyper: Hyperparams,
    pub params: ModelParams,
    /// Author ids in the order of `params.delta` rows.
    pub authors: Vec<String>,
    pub vocab: Vocabulary,
}

impl Checkpoint {
    pub fn new(hyper: Hyperparams, params: ModelParams, corpus: &Corpus) -> Self {
        Self::from_parts(hyper, params, corpus.authors().to_vec(), corpus.vocab().clone())
    }

    pub fn from_parts(hyper: Hyperparams, params: ModelParams, authors: Vec<String>, vocab: Vocabulary) -> Self {
        Self { format: FORMAT.to_string(), version: VERSION, hyper, params, authors, vocab }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(s)?;
        if ck.format != FORMAT {
            return Err(DapError::InvalidArgument(format!("not a checkpoint: format {:?}", ck.format)));
        }
        if ck.version != VERSION {
            return Err(DapError::InvalidArgument(format!("unsupported checkpoint version {}", ck.version)));
        }
        ck.hyper.validate()?;
        ck.params.validate()?;
        if ck.params.num_authors() != ck.authors.len() || ck.params.vocab_size() != ck.vocab.len() {
            return Err(DapError::InvalidArgument("checkpoint registry sizes disagree with parameters".into()));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;
    use crate::sampler::{sample_corpus, SampleShape};

    fn sample() -> Checkpoint {
        let h = Hyperparams::new(3, 2);
        let (c, _) = sample_corpus(&h, &SampleShape::new(2, 3, 1, 10, 12), 1, None).unwrap();
        let p = init_params(&c, &h, 5).unwrap();
        Checkpoint::new(h, p, &c)
    }

    #[test]
    fn round_trips_exactly() {
        let ck = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(ck, back);
        assert_eq!(ck.to_json().unwrap(), back.to_json().unwrap());
    }

    #[test]
    fn rejects_foreign_or_broken_files() {
        let ck = sample();
        let json = ck.to_json().unwrap();
        assert!(Checkpoint::from_json(&json.replace("dap-checkpoint", "other")).is_err());
        let mut bad = ck.clone();
        bad.authors.pop();
        assert!(Checkpoint::from_json(&bad.to_json().unwrap()).is_err());
        assert!(Checkpoint::from_json("{").is_err());
    }
}
