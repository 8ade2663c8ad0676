use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::RawDocument;
use crate::error::{DapError, Result};

const STOPWORDS: &str = include_str!("stopwords.txt");

/// The bundled English stopword list.
pub fn default_stopwords() -> BTreeSet<String> {
    parse_stopwords(STOPWORDS)
}

/// One word per line; blank lines and `#` comments ignored.
pub fn parse_stopwords(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

/// Lowercase and split on anything that is not alphanumeric or `_`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Dense term ids in `[0, V)`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn from_terms(terms: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(DapError::InvalidArgument(format!("duplicate term {t:?}")));
            }
        }
        Ok(Self { terms, index })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn id(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    pub fn term(&self, id: u32) -> &str {
        &self.terms[id as usize]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }
}

impl From<Vec<String>> for Vocabulary {
    fn from(terms: Vec<String>) -> Self {
        // duplicates keep their first id
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            index.entry(t.clone()).or_insert(i as u32);
        }
        Self { terms, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.terms
    }
}

/// Keep the `cap` most frequent terms after dropping stopwords and terms
/// whose document frequency exceeds `max_doc_frac`. Ids follow rank:
/// descending total count, ties broken lexicographically.
pub fn build_vocabulary(
    raw: &[RawDocument],
    cap: usize,
    max_doc_frac: f64,
    stopwords: &BTreeSet<String>,
) -> Result<Vocabulary> {
    if raw.is_empty() {
        return Err(DapError::NoDocuments);
    }
    if cap < 1 {
        return Err(DapError::InvalidArgument("vocabulary cap must be at least 1".into()));
    }
    if !(max_doc_frac > 0.0 && max_doc_frac <= 1.0) {
        return Err(DapError::InvalidArgument("max_doc_frac must lie in (0, 1]".into()));
    }
    // term -> (total count, document frequency)
    let mut stats: HashMap<String, (u64, u64)> = HashMap::new();
    for doc in raw {
        let mut seen = HashSet::new();
        for tok in doc.tokens() {
            if stopwords.contains(&tok) {
                continue;
            }
            let e = stats.entry(tok.clone()).or_insert((0, 0));
            e.0 += 1;
            if seen.insert(tok) {
                e.1 += 1;
            }
        }
    }
    let n_docs = raw.len() as f64;
    let mut ranked: Vec<(String, u64)> = stats
        .into_iter()
        .filter(|(_, (_, df))| (*df as f64) / n_docs <= max_doc_frac)
        .map(|(t, (c, _))| (t, c))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(cap);
    Vocabulary::from_terms(ranked.into_iter().map(|(t, _)| t).collect())
}
