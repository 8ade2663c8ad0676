use rand::seq::SliceRandom;

use super::Corpus;
use crate::error::{DapError, Result};
use crate::rng::{stream_rng, Stream};

/// Per-author random train/test split. Each author with `n` documents sends
/// `ceil(test_frac * n)` of them to test, but never all of them: at least one
/// document stays in train. Deterministic in `fold_seed`.
pub fn split_train_test(corpus: &Corpus, test_frac: f64, fold_seed: u64) -> Result<(Corpus, Corpus)> {
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(DapError::InvalidArgument("test_frac must lie in (0, 1)".into()));
    }
    let mut by_author: Vec<Vec<usize>> = vec![Vec::new(); corpus.num_authors()];
    for (i, d) in corpus.docs().iter().enumerate() {
        by_author[d.author].push(i);
    }
    let mut rng = stream_rng(fold_seed, Stream::Split);
    let mut is_test = vec![false; corpus.num_docs()];
    for docs in &mut by_author {
        let n = docs.len();
        let m = ((test_frac * n as f64).ceil() as usize).min(n.saturating_sub(1));
        docs.shuffle(&mut rng);
        for &i in &docs[..m] {
            is_test[i] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (doc, t) in corpus.docs().iter().zip(is_test) {
        if t { test.push(doc.clone()) } else { train.push(doc.clone()) }
    }
    Ok((corpus.with_docs(train)?, corpus.with_docs(test)?))
}
