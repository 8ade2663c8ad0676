//! Corpus ingestion: raw journals in, time-sliced bag-of-words out.

mod io;
mod split;
mod vocab;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{DapError, Result};

pub use io::{read_corpus, read_raw_jsonl, write_corpus, parse_raw_line};
pub use split::split_train_test;
pub use vocab::{build_vocabulary, default_stopwords, parse_stopwords, tokenize, Vocabulary};

/// Text of a raw journal entry, either free text or an already tokenized list.
#[derive(Clone, Debug, PartialEq)]
pub enum RawContent {
    Text(String),
    Tokens(Vec<String>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawDocument {
    pub author_id: String,
    /// Days since an arbitrary epoch.
    pub timestamp: f64,
    pub content: RawContent,
}

impl RawDocument {
    pub fn new(author_id: impl Into<String>, timestamp: f64, content: RawContent) -> Result<Self> {
        let author_id = author_id.into();
        if author_id.is_empty() {
            return Err(DapError::InvalidArgument("author_id must be nonempty".into()));
        }
        if !timestamp.is_finite() {
            return Err(DapError::InvalidArgument("timestamp must be finite".into()));
        }
        Ok(Self { author_id, timestamp, content })
    }

    pub fn from_text(author_id: impl Into<String>, timestamp: f64, text: &str) -> Result<Self> {
        Self::new(author_id, timestamp, RawContent::Text(text.to_string()))
    }

    pub fn from_tokens<S: AsRef<str>>(author_id: impl Into<String>, timestamp: f64, tokens: &[S]) -> Result<Self> {
        let tokens = tokens.iter().map(|t| t.as_ref().to_string()).collect();
        Self::new(author_id, timestamp, RawContent::Tokens(tokens))
    }

    /// Tokens of the document. Free text goes through [`tokenize`]; token
    /// lists are taken as given, minus empty strings.
    pub fn tokens(&self) -> Vec<String> {
        match &self.content {
            RawContent::Text(text) => tokenize(text),
            RawContent::Tokens(tokens) => tokens.iter().filter(|t| !t.is_empty()).cloned().collect(),
        }
    }
}

/// A bag-of-words document placed on the global time axis.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Document {
    /// Index into [`Corpus::authors`].
    pub author: usize,
    pub step: usize,
    /// `(term id, count)` pairs sorted by term id, counts positive.
    pub terms: Vec<(u32, u32)>,
}

impl Document {
    pub fn new(author: usize, step: usize, mut terms: Vec<(u32, u32)>) -> Self {
        terms.retain(|&(_, c)| c > 0);
        terms.sort_unstable_by_key(|&(v, _)| v);
        Self { author, step, terms }
    }

    /// Total token count N.
    pub fn len(&self) -> u32 {
        self.terms.iter().map(|&(_, c)| c).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Time-sliced bag-of-words corpus. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    vocab: Vocabulary,
    authors: Vec<String>,
    delta: Vec<f64>,
    docs: Vec<Document>,
    slices: Vec<Range<usize>>,
}

impl Corpus {
    /// Assemble a corpus. Documents are stably ordered by time step.
    pub fn new(vocab: Vocabulary, authors: Vec<String>, delta: Vec<f64>, mut docs: Vec<Document>) -> Result<Self> {
        let t_count = delta.len();
        if let Some((t, d)) = delta.iter().enumerate().find(|(_, d)| !(d.is_finite() && **d > 0.0)) {
            return Err(DapError::InvalidArgument(format!("delta for step {t} must be positive, got {d}")));
        }
        let v = vocab.len() as u32;
        for doc in &docs {
            if doc.author >= authors.len() {
                return Err(DapError::InvalidArgument(format!("unregistered author index {}", doc.author)));
            }
            if doc.step >= t_count {
                return Err(DapError::InvalidArgument(format!("step {} outside schedule of {t_count} steps", doc.step)));
            }
            if let Some(&(id, _)) = doc.terms.iter().find(|&&(id, _)| id >= v) {
                return Err(DapError::InvalidArgument(format!("term id {id} outside vocabulary of size {v}")));
            }
        }
        docs.sort_by_key(|d| d.step);
        let mut slices = Vec::with_capacity(t_count);
        let mut start = 0;
        for t in 0..t_count {
            let end = start + docs[start..].iter().take_while(|d| d.step == t).count();
            slices.push(start..end);
            start = end;
        }
        Ok(Self { vocab, authors, delta, docs, slices })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn authors(&self) -> &[String] {
        &self.authors
    }

    pub fn author_index(&self, id: &str) -> Option<usize> {
        self.authors.iter().position(|a| a == id)
    }

    /// Per-step elapsed time Δ, in discretisation periods.
    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn slice(&self, t: usize) -> &[Document] {
        &self.docs[self.slices[t].clone()]
    }

    pub fn slice_range(&self, t: usize) -> Range<usize> {
        self.slices[t].clone()
    }

    pub fn num_steps(&self) -> usize {
        self.delta.len()
    }

    pub fn num_authors(&self) -> usize {
        self.authors.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    /// D_t for every step.
    pub fn docs_per_step(&self) -> Vec<usize> {
        self.slices.iter().map(|r| r.len()).collect()
    }

    pub fn total_tokens(&self) -> u64 {
        self.docs.iter().map(|d| d.len() as u64).sum()
    }

    /// Same vocabulary, registry and schedule, different documents.
    pub fn with_docs(&self, docs: Vec<Document>) -> Result<Self> {
        Self::new(self.vocab.clone(), self.authors.clone(), self.delta.clone(), docs)
    }
}

/// Knobs for turning raw journals into a [`Corpus`].
#[derive(Clone, Debug)]
pub struct PrepareConfig {
    pub min_words: u32,
    pub vocab_cap: usize,
    pub max_doc_frac: f64,
    pub period_days: f64,
    pub stopwords: BTreeSet<String>,
    /// Overrides the uniform Δ = 1 schedule. Must cover every step.
    pub delta_schedule: Option<Vec<f64>>,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            min_words: 10,
            vocab_cap: 5000,
            max_doc_frac: 0.9,
            period_days: 7.0,
            stopwords: default_stopwords(),
            delta_schedule: None,
        }
    }
}

/// Relative time step of every document: whole periods since the author's
/// first post. Returns the steps (input order) and the global step count.
pub fn discretize_time(raw: &[RawDocument], period_days: f64) -> Result<(Vec<usize>, usize)> {
    if !(period_days.is_finite() && period_days > 0.0) {
        return Err(DapError::InvalidArgument("period must be positive".into()));
    }
    let mut first: HashMap<&str, f64> = HashMap::new();
    for doc in raw {
        let e = first.entry(doc.author_id.as_str()).or_insert(doc.timestamp);
        if doc.timestamp < *e {
            *e = doc.timestamp;
        }
    }
    let steps: Vec<usize> = raw
        .iter()
        .map(|doc| ((doc.timestamp - first[doc.author_id.as_str()]) / period_days).floor() as usize)
        .collect();
    let t_count = steps.iter().max().map_or(0, |m| m + 1);
    Ok((steps, t_count))
}

/// Restrict every document to the vocabulary, drop short documents and
/// assemble the time slices.
pub fn bag_of_words(raw: &[RawDocument], vocab: &Vocabulary, config: &PrepareConfig) -> Result<Corpus> {
    let (steps, _) = discretize_time(raw, config.period_days)?;
    let mut kept: Vec<(&str, usize, Vec<(u32, u32)>)> = Vec::new();
    for (doc, &step) in raw.iter().zip(&steps) {
        let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
        for tok in doc.tokens() {
            if let Some(id) = vocab.id(&tok) {
                *counts.entry(id).or_insert(0) += 1;
            }
        }
        let n: u32 = counts.values().sum();
        if n < config.min_words.max(1) {
            continue;
        }
        kept.push((doc.author_id.as_str(), step, counts.into_iter().collect()));
    }
    if kept.is_empty() {
        return Err(DapError::EmptyCorpus);
    }
    let authors: Vec<String> = kept.iter().map(|k| k.0).collect::<BTreeSet<_>>().into_iter().map(String::from).collect();
    let index: HashMap<&str, usize> = authors.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
    let t_count = kept.iter().map(|k| k.1).max().unwrap() + 1;
    let delta = match &config.delta_schedule {
        Some(s) if s.len() < t_count => {
            return Err(DapError::InvalidArgument(format!(
                "delta schedule has {} entries but the corpus spans {t_count} steps",
                s.len()
            )))
        }
        Some(s) => s[..t_count].to_vec(),
        None => vec![1.0; t_count],
    };
    let docs = kept.into_iter().map(|(a, t, terms)| Document::new(index[a], t, terms)).collect();
    Corpus::new(vocab.clone(), authors, delta, docs)
}

/// Vocabulary construction followed by [`bag_of_words`].
pub fn prepare(raw: &[RawDocument], config: &PrepareConfig) -> Result<Corpus> {
    let vocab = build_vocabulary(raw, config.vocab_cap, config.max_doc_frac, &config.stopwords)?;
    bag_of_words(raw, &vocab, config)
}
