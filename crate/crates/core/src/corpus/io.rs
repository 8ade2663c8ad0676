//! Raw JSONL input and the processed corpus text format.
//!
//! ```text
//! DAP-CORPUS v1 T=<T> A=<A> V=<V>
//! <term 0>
//! ...
//! <term V-1>
//! <t> <delta_s> <author_id> <N> <term_id>:<count> ...
//! ```
//!
//! The author registry is rebuilt on read as the sorted set of author ids
//! that appear in document lines; steps without documents get Δ = 1.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::Deserialize;

use super::{Corpus, Document, RawContent, RawDocument, Vocabulary};
use crate::error::{DapError, Result};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLine {
    author_id: String,
    timestamp: f64,
    text: Option<String>,
    tokens: Option<Vec<String>>,
}

/// Parse one JSONL record. `line` is only used for error messages.
pub fn parse_raw_line(text: &str, line: usize) -> Result<RawDocument> {
    let perr = |message: String| DapError::Parse { line, message };
    let rec: RawLine = serde_json::from_str(text).map_err(|e| perr(e.to_string()))?;
    let content = match (rec.text, rec.tokens) {
        (Some(t), None) => RawContent::Text(t),
        (None, Some(toks)) => RawContent::Tokens(toks),
        _ => return Err(perr("exactly one of `text` or `tokens` is required".into())),
    };
    RawDocument::new(rec.author_id, rec.timestamp, content).map_err(|e| perr(e.to_string()))
}

/// Read one JSON object per line. Blank lines are skipped.
pub fn read_raw_jsonl<R: BufRead>(reader: R) -> Result<Vec<RawDocument>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_raw_line(&line, i + 1)?);
    }
    Ok(out)
}

fn check_token(kind: &str, s: &str) -> Result<()> {
    if s.is_empty() || s.chars().any(char::is_whitespace) {
        return Err(DapError::InvalidArgument(format!("{kind} {s:?} cannot be written: empty or contains whitespace")));
    }
    Ok(())
}

pub fn write_corpus<W: Write>(corpus: &Corpus, mut w: W) -> Result<()> {
    let mut buf = String::new();
    writeln!(buf, "DAP-CORPUS v1 T={} A={} V={}", corpus.num_steps(), corpus.num_authors(), corpus.vocab_size()).unwrap();
    for term in corpus.vocab().terms() {
        check_token("term", term)?;
        buf.push_str(term);
        buf.push('\n');
    }
    for doc in corpus.docs() {
        let author = &corpus.authors()[doc.author];
        check_token("author id", author)?;
        write!(buf, "{} {} {} {}", doc.step, corpus.delta()[doc.step], author, doc.len()).unwrap();
        for &(v, c) in &doc.terms {
            write!(buf, " {v}:{c}").unwrap();
        }
        buf.push('\n');
    }
    w.write_all(buf.as_bytes())?;
    Ok(())
}

fn header_field(tok: Option<&str>, key: &str) -> Option<usize> {
    tok?.strip_prefix(key)?.strip_prefix('=')?.parse().ok()
}

pub fn read_corpus<R: BufRead>(reader: R) -> Result<Corpus> {
    let mut lines = reader.lines().enumerate();
    let perr = |line: usize, message: &str| DapError::Parse { line, message: message.to_string() };

    let (_, header) = lines.next().ok_or_else(|| perr(1, "missing header"))?;
    let header = header?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("DAP-CORPUS") || toks.next() != Some("v1") {
        return Err(perr(1, "expected `DAP-CORPUS v1` header"));
    }
    let t_count = header_field(toks.next(), "T").ok_or_else(|| perr(1, "bad T field"))?;
    let a_count = header_field(toks.next(), "A").ok_or_else(|| perr(1, "bad A field"))?;
    let v_count = header_field(toks.next(), "V").ok_or_else(|| perr(1, "bad V field"))?;

    let mut terms = Vec::with_capacity(v_count);
    for _ in 0..v_count {
        let (i, line) = lines.next().ok_or_else(|| perr(v_count + 1, "truncated vocabulary"))?;
        let line = line?;
        let term = line.trim_end_matches('\r');
        if term.is_empty() || term.chars().any(char::is_whitespace) {
            return Err(perr(i + 1, "vocabulary term must be a single non-empty token"));
        }
        terms.push(term.to_string());
    }
    let vocab = Vocabulary::from_terms(terms).map_err(|e| perr(0, &e.to_string()))?;

    let mut delta: BTreeMap<usize, f64> = BTreeMap::new();
    let mut parsed: Vec<(usize, String, Vec<(u32, u32)>)> = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut f = line.split_whitespace();
        let step: usize = f.next().and_then(|s| s.parse().ok()).ok_or_else(|| perr(lineno, "bad time step"))?;
        let d: f64 = f.next().and_then(|s| s.parse().ok()).ok_or_else(|| perr(lineno, "bad delta"))?;
        let author = f.next().ok_or_else(|| perr(lineno, "missing author"))?.to_string();
        let n: u64 = f.next().and_then(|s| s.parse().ok()).ok_or_else(|| perr(lineno, "bad token count"))?;
        if step >= t_count {
            return Err(perr(lineno, "time step outside header T"));
        }
        match delta.insert(step, d) {
            Some(prev) if prev != d => return Err(perr(lineno, "inconsistent delta within a time step")),
            _ => {}
        }
        let mut counts = Vec::new();
        for pair in f {
            let (v, c) = pair.split_once(':').ok_or_else(|| perr(lineno, "expected term_id:count"))?;
            let v: u32 = v.parse().map_err(|_| perr(lineno, "bad term id"))?;
            let c: u32 = c.parse().map_err(|_| perr(lineno, "bad count"))?;
            if v as usize >= v_count || c == 0 {
                return Err(perr(lineno, "term id out of range or zero count"));
            }
            counts.push((v, c));
        }
        if counts.iter().map(|&(_, c)| c as u64).sum::<u64>() != n {
            return Err(perr(lineno, "N does not match the sum of counts"));
        }
        parsed.push((step, author, counts));
    }

    let authors: Vec<String> = parsed.iter().map(|p| p.1.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    if authors.len() > a_count {
        return Err(perr(1, "more distinct authors than header A"));
    }
    let schedule = (0..t_count).map(|t| delta.get(&t).copied().unwrap_or(1.0)).collect();
    let docs = parsed
        .into_iter()
        .map(|(step, a, counts)| {
            let idx = authors.binary_search(&a).expect("author collected above");
            Document::new(idx, step, counts)
        })
        .collect();
    Corpus::new(vocab, authors, schedule, docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_line_variants() {
        let d = parse_raw_line(r#"{"author_id":"a1","timestamp":3.5,"text":"hi there"}"#, 1).unwrap();
        assert_eq!(d.tokens(), vec!["hi", "there"]);
        let d = parse_raw_line(r#"{"author_id":"a1","timestamp":3.5,"tokens":["x","y"]}"#, 1).unwrap();
        assert_eq!(d.tokens(), vec!["x", "y"]);
        let err = parse_raw_line(r#"{"author_id":"a1","timestamp":3.5,"text":"a","tokens":["x"]}"#, 7).unwrap_err();
        assert!(err.to_string().starts_with("line 7:"));
        assert!(parse_raw_line(r#"{"author_id":"","timestamp":1,"text":"a"}"#, 2).is_err());
    }

    #[test]
    fn malformed_jsonl_reports_line() {
        let input = "{\"author_id\":\"a\",\"timestamp\":0,\"text\":\"x\"}\n\nnot json\n";
        match read_raw_jsonl(input.as_bytes()).unwrap_err() {
            DapError::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn writes_documented_layout() {
        let vocab = Vocabulary::from_terms(vec!["a".into(), "b".into()]).unwrap();
        let c = Corpus::new(vocab, vec!["u1".into()], vec![1.0, 2.5], vec![
            Document::new(0, 1, vec![(1, 2)]),
            Document::new(0, 0, vec![(0, 1), (1, 1)]),
        ])
        .unwrap();
        let mut out = Vec::new();
        write_corpus(&c, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "DAP-CORPUS v1 T=2 A=1 V=2\na\nb\n0 1 u1 2 0:1 1:1\n1 2.5 u1 2 1:2\n");
        assert_eq!(read_corpus(text.as_bytes()).unwrap(), c);
    }

    #[test]
    fn count_mismatch_rejected() {
        let text = "DAP-CORPUS v1 T=1 A=1 V=1\na\n0 1 u 3 0:2\n";
        match read_corpus(text.as_bytes()).unwrap_err() {
            DapError::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }
}
