//! Sufficient statistics gathered over an E-step.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use super::{DocElbo, DocVariational};
use crate::corpus::Document;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuffStats {
    /// K×V expected topic-word counts `Σ_d Σ_n φ_{d,n,k} [w_{d,n} = v]`.
    pub beta_counts: Array2<f64>,
    /// A×P summed persona responsibilities per author.
    pub tau_author: Array2<f64>,
    /// T×P×K `Σ_d (γ_d − 1) τ_{d,p}` per step.
    pub alpha_rhs: Array3<f64>,
    /// T×P `Σ_d τ_{d,p}²`.
    pub tau_sq: Array2<f64>,
    /// T×P `Σ_d τ_{d,p}`.
    pub tau_sum_tp: Array2<f64>,
    /// Summed per-document bound.
    pub elbo: DocElbo,
    pub docs: usize,
    pub tokens: u64,
}

impl SuffStats {
    pub fn new(k: usize, v: usize, a: usize, t: usize, p: usize) -> Self {
        Self {
            beta_counts: Array2::zeros((k, v)),
            tau_author: Array2::zeros((a, p)),
            alpha_rhs: Array3::zeros((t, p, k)),
            tau_sq: Array2::zeros((t, p)),
            tau_sum_tp: Array2::zeros((t, p)),
            elbo: DocElbo::default(),
            docs: 0,
            tokens: 0,
        }
    }

    /// Add another set of statistics over disjoint documents.
    pub fn merge(&mut self, other: &SuffStats) {
        self.beta_counts += &other.beta_counts;
        self.tau_author += &other.tau_author;
        self.alpha_rhs += &other.alpha_rhs;
        self.tau_sq += &other.tau_sq;
        self.tau_sum_tp += &other.tau_sum_tp;
        self.elbo.add(&other.elbo);
        self.docs += other.docs;
        self.tokens += other.tokens;
    }
}

/// Fold one document's variational state into `stats`.
pub fn accumulate_stats(stats: &mut SuffStats, doc: &Document, state: &DocVariational, elbo: &DocElbo) {
    for (row, &(v, c)) in state.phi.rows().into_iter().zip(&doc.terms) {
        let c = c as f64;
        for (k, f) in row.iter().enumerate() {
            stats.beta_counts[[k, v as usize]] += c * f;
        }
    }
    let t = doc.step;
    for (p, &tp) in state.tau.iter().enumerate() {
        stats.tau_author[[doc.author, p]] += tp;
        stats.tau_sum_tp[[t, p]] += tp;
        stats.tau_sq[[t, p]] += tp * tp;
        for (k, g) in state.gamma.iter().enumerate() {
            stats.alpha_rhs[[t, p, k]] += (g - 1.0) * tp;
        }
    }
    stats.elbo.add(elbo);
    stats.docs += 1;
    stats.tokens += doc.len() as u64;
}
