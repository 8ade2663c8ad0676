//! Persona analyses: author concentration, top topics over time and
//! distinctness, plus matching of learned personas to known ones.

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::model::{softmax_pi, ModelParams};
use crate::sampler::argmax;

/// One of the top topics of a persona at a step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicMass {
    pub topic: usize,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersonaReport {
    /// Fraction of authors whose normalised δ has a component above 0.9.
    pub concentration: f64,
    /// Fraction whose top two components hold at least 0.9 but the top one does not.
    pub split2: f64,
    /// `top_topics[p][t]`: up to three topics by mass under π(α_{t,p}).
    pub top_topics: Vec<Vec<Vec<TopicMass>>>,
    /// Size of the union of all top-topic sets.
    pub distinct_topic_count: usize,
    /// Mean cosine similarity between flattened trajectories over persona pairs.
    pub mean_pairwise_cosine: f64,
}

impl PersonaReport {
    /// `persona,t,rank,topic,mass` rows.
    pub fn trajectory_csv(&self) -> String {
        let mut out = String::from("persona,t,rank,topic,mass\n");
        for (p, steps) in self.top_topics.iter().enumerate() {
            for (t, tops) in steps.iter().enumerate() {
                for (rank, tm) in tops.iter().enumerate() {
                    out.push_str(&format!("{p},{t},{},{},{}\n", rank + 1, tm.topic, tm.mass));
                }
            }
        }
        out
    }
}

/// Top `n` entries by value, ties broken by lower index.
pub fn top_n(values: &[f64], n: usize) -> Vec<TopicMass> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.into_iter().take(n).map(|topic| TopicMass { topic, mass: values[topic] }).collect()
}

pub fn persona_report(params: &ModelParams) -> PersonaReport {
    let (t_len, p_len, _) = params.alpha.dim();

    let (mut conc, mut split) = (0usize, 0usize);
    for row in params.delta.rows() {
        let s = row.sum();
        let mut w: Vec<f64> = row.iter().map(|d| d / s).collect();
        w.sort_by(|a, b| b.total_cmp(a));
        if w[0] > 0.9 {
            conc += 1;
        } else if w.len() > 1 && w[0] + w[1] >= 0.9 {
            split += 1;
        }
    }
    let a = params.num_authors().max(1) as f64;

    let mut top_topics = Vec::with_capacity(p_len);
    let mut seen = std::collections::BTreeSet::new();
    for p in 0..p_len {
        let mut steps = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let pi = softmax_pi(&params.alpha.slice(s![t, p, ..]).to_vec());
            let tops = top_n(&pi, 3);
            seen.extend(tops.iter().map(|m| m.topic));
            steps.push(tops);
        }
        top_topics.push(steps);
    }

    PersonaReport {
        concentration: conc as f64 / a,
        split2: split as f64 / a,
        top_topics,
        distinct_topic_count: seen.len(),
        mean_pairwise_cosine: mean_pairwise_cosine(params),
    }
}

/// Mean cosine similarity of flattened `α_{·,p}` over unordered persona
/// pairs; 0 with a single persona.
pub fn mean_pairwise_cosine(params: &ModelParams) -> f64 {
    let p_len = params.num_personas();
    let flat: Vec<Vec<f64>> =
        (0..p_len).map(|p| params.alpha.index_axis(Axis(1), p).iter().copied().collect()).collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..p_len {
        for j in i + 1..p_len {
            total += cosine(&flat[i], &flat[j]);
            pairs += 1;
        }
    }
    if pairs == 0 { 0.0 } else { total / pairs as f64 }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 { 0.0 } else { dot / (na * nb) }
}

/// Assignment maximising the total weight of a square matrix
/// (Hungarian algorithm). Returns `col[row]`.
pub fn max_weight_matching(weights: &Array2<f64>) -> Vec<usize> {
    let n = weights.nrows();
    assert_eq!(n, weights.ncols(), "square matrix required");
    // shortest augmenting path on costs −w, 1-based potentials
    let inf = f64::INFINITY;
    let cost = |i: usize, j: usize| -weights[[i - 1, j - 1]];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut owner = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col = vec![0; n];
    for j in 1..=n {
        if owner[j] > 0 {
            col[owner[j] - 1] = j - 1;
        }
    }
    col
}

/// Fraction of authors whose δ-argmax persona matches `truth` under the
/// best relabelling of learned personas. Also returns the relabelling
/// (`learned → true`).
pub fn matched_accuracy(delta: &Array2<f64>, truth: &[usize], num_personas: usize) -> (f64, Vec<usize>) {
    let learned: Vec<usize> = delta.rows().into_iter().map(|r| argmax(r.iter().copied())).collect();
    let mut agree = Array2::<f64>::zeros((num_personas, num_personas));
    for (&l, &t) in learned.iter().zip(truth) {
        agree[[l, t]] += 1.0;
    }
    let perm = max_weight_matching(&agree);
    let hits: f64 = (0..num_personas).map(|l| agree[[l, perm[l]]]).sum();
    (hits / truth.len().max(1) as f64, perm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use itertools::Itertools;
    use ndarray::{array, Array3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params_with(alpha: Array3<f64>, delta: Array2<f64>) -> ModelParams {
        let (t, p, k) = alpha.dim();
        ModelParams {
            beta: Array2::from_elem((k, 2), 0.5),
            alpha_var: Array3::ones((t, p, k)),
            alpha_hat: alpha.clone(),
            alpha,
            delta,
            schedule: vec![1.0; t],
        }
    }

    #[test]
    fn single_concentrated_author() {
        let p = params_with(Array3::zeros((1, 2, 4)), array![[9.5, 0.5]]);
        let r = persona_report(&p);
        assert_eq!(r.concentration, 1.0);
        assert_eq!(r.split2, 0.0);
    }

    #[test]
    fn identical_personas() {
        let mut alpha = Array3::zeros((3, 3, 5));
        for t in 0..3 {
            for p in 0..3 {
                for k in 0..5 {
                    alpha[[t, p, k]] = (k as f64 + 1.0) * 0.3 - t as f64 * 0.1;
                }
            }
        }
        let r = persona_report(&params_with(alpha, array![[1.0, 1.0, 1.0]]));
        assert!((r.mean_pairwise_cosine - 1.0).abs() < 1e-12);
        assert_eq!(r.distinct_topic_count, 3);
        assert_eq!(r.top_topics[0][0].iter().map(|m| m.topic).collect::<Vec<_>>(), vec![4, 3, 2]);
    }

    #[test]
    fn ties_prefer_lower_ids() {
        let tops = top_n(&[0.2, 0.3, 0.2, 0.3], 3);
        assert_eq!(tops.iter().map(|m| m.topic).collect::<Vec<_>>(), vec![1, 3, 0]);
    }

    #[test]
    fn split_between_two() {
        let p = params_with(Array3::zeros((1, 3, 2)), array![[5.0, 4.5, 0.5], [1.0, 1.0, 1.0]]);
        let r = persona_report(&p);
        assert_eq!(r.concentration, 0.0);
        assert_eq!(r.split2, 0.5);
    }

    #[test]
    fn single_persona_cosine_is_zero() {
        let p = params_with(Array3::ones((2, 1, 3)), array![[1.0]]);
        assert_eq!(persona_report(&p).mean_pairwise_cosine, 0.0);
    }

    #[test]
    fn hungarian_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for n in 1..=6 {
            for _ in 0..20 {
                let w = Array2::from_shape_fn((n, n), |_| rng.random_range(0..10) as f64);
                let got = max_weight_matching(&w);
                let score = |perm: &[usize]| (0..n).map(|i| w[[i, perm[i]]]).sum::<f64>();
                let best = (0..n).permutations(n).map(|p| score(&p)).fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(score(&got), best);
                assert_eq!(got.iter().sorted().copied().collect::<Vec<_>>(), (0..n).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn accuracy_under_relabelling() {
        let delta = array![[0.1, 5.0], [0.1, 4.0], [3.0, 0.2], [0.1, 2.0]];
        let (acc, perm) = matched_accuracy(&delta, &[0, 0, 1, 1], 2);
        assert_eq!(perm, vec![1, 0]);
        assert_eq!(acc, 0.75);
    }
}
