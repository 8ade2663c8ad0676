use super::*;
use approx::assert_abs_diff_eq;
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::special::digamma;

/// Owned inputs for a [`DocContext`].
struct Setup {
    means: Array2<f64>,
    var: Array2<f64>,
    log_beta: Array2<f64>,
    elog: Vec<f64>,
    mu0: Vec<f64>,
    process_var: f64,
}

impl Setup {
    fn random(rng: &mut ChaCha8Rng, k: usize, p: usize, v: usize) -> Self {
        let means = Array2::from_shape_fn((p, k), |_| rng.random_range(-1.5..1.5));
        let var = Array2::from_shape_fn((p, k), |_| rng.random_range(0.01..0.3));
        let mut beta = Array2::from_shape_fn((k, v), |_| rng.random_range(0.05..1.0));
        for mut row in beta.rows_mut() {
            let s = row.sum();
            row /= s;
        }
        let delta: Vec<f64> = (0..p).map(|_| rng.random_range(0.2..5.0)).collect();
        let total: f64 = delta.iter().sum();
        Self {
            means,
            var,
            log_beta: beta.mapv(f64::ln),
            elog: delta.iter().map(|&d| digamma(d) - digamma(total)).collect(),
            mu0: vec![0.0; k],
            process_var: rng.random_range(0.3..2.0),
        }
    }

    fn ctx(&self) -> DocContext<'_> {
        DocContext {
            persona_means: self.means.view(),
            persona_var: Some(self.var.view()),
            process_var: self.process_var,
            elog_kappa: self.elog.clone(),
            log_beta: self.log_beta.view(),
            mu0: &self.mu0,
        }
    }
}

fn random_doc(rng: &mut ChaCha8Rng, v: usize, max_len: u32) -> Document {
    let mut terms = Vec::new();
    for w in 0..v as u32 {
        if rng.random_bool(0.4) {
            terms.push((w, rng.random_range(1..=max_len)));
        }
    }
    if terms.is_empty() {
        terms.push((0, 1));
    }
    Document::new(0, 0, terms)
}

/// A state with every field perturbed away from its optimum.
fn random_state(rng: &mut ChaCha8Rng, ctx: &DocContext<'_>, doc: &Document) -> DocVariational {
    let k = ctx.num_topics();
    let p = ctx.num_personas();
    let gamma: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let vhat: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..2.0)).collect();
    let mut tau: Vec<f64> = (0..p).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = tau.iter().sum();
    tau.iter_mut().for_each(|t| *t /= s);
    let phi = update_phi(&gamma, ctx.log_beta, &doc.terms);
    let log_zeta = log_zeta(&gamma, &vhat) + rng.random_range(-0.3..0.3);
    DocVariational { gamma, vhat, phi, tau, log_zeta }
}

fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[test]
fn phi_examples() {
    let lb = array![[0.5f64.ln()], [0.5f64.ln()]];
    let phi = update_phi(&[0.0, 0.0], lb.view(), &[(0, 1)]);
    assert_abs_diff_eq!(phi[[0, 0]], 0.5, epsilon = 1e-15);

    let lb = array![[0.1f64.ln()], [0.2f64.ln()]];
    let phi = update_phi(&[2f64.ln(), 0.0], lb.view(), &[(0, 3)]);
    assert_abs_diff_eq!(phi[[0, 0]], 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(phi[[0, 1]], 0.5, epsilon = 1e-12);

    let lb = array![[0.0], [1e-300f64.ln()]];
    let phi = update_phi(&[0.0, 0.0], lb.view(), &[(0, 1)]);
    assert!(phi.iter().all(|x| x.is_finite()));
    assert_abs_diff_eq!(phi[[0, 0]], 1.0, epsilon = 1e-15);
    assert!(phi[[0, 1]] < 1e-250);
}

#[test]
fn zeta_examples() {
    assert_abs_diff_eq!(update_zeta(&[0.0; 25], &[0.0; 25]), 25.0, epsilon = 1e-12);
    assert_abs_diff_eq!(update_zeta(&[3f64.ln()], &[0.0]), 3.0, epsilon = 1e-12);
    assert_abs_diff_eq!(update_zeta(&[0.0, 0.0], &[2.0, 2.0]), 2.0 * std::f64::consts::E, epsilon = 1e-12);
    // log space keeps huge exponents finite
    assert_abs_diff_eq!(log_zeta(&[800.0, 0.0], &[0.0, 0.0]), 800.0, epsilon = 1e-12);
}

#[test]
fn gamma_gradient_examples() {
    let a = array![[0.3, -0.2, 1.0], [2.0, 0.0, -1.0]];
    let tau = [0.25, 0.75];
    let m: Vec<f64> = (0..3).map(|k| 0.25 * a[[0, k]] + 0.75 * a[[1, k]]).collect();
    let g = gamma_gradient(&m, &[1.0; 3], &tau, a.view(), 0.7, &[0.0; 3], 0.0, 5.0);
    assert!(g.iter().all(|x| x.abs() < 1e-15));

    let a = array![[0.0]];
    let g = gamma_gradient(&[0.0], &[0.0], &[1.0], a.view(), 1.0, &[1.0], 1.0, 1.0);
    assert_abs_diff_eq!(g[0], 0.0, epsilon = 1e-15);
}

#[test]
fn gamma_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let s = Setup::random(&mut rng, 4, 3, 6);
        let ctx = s.ctx();
        let doc = random_doc(&mut rng, 6, 4);
        let state = random_state(&mut rng, &ctx, &doc);
        let g = gamma_gradient(
            &state.gamma,
            &state.vhat,
            &state.tau,
            ctx.persona_means,
            ctx.process_var,
            &state.phi_colsums(&doc),
            doc.len() as f64,
            state.zeta(),
        );
        for k in 0..4 {
            let fd = central_diff(
                |x| {
                    let mut st = state.clone();
                    st.gamma[k] = x;
                    doc_elbo(&ctx, &doc, &st).total()
                },
                state.gamma[k],
                1e-5,
            );
            assert!(rel_err(g[k], fd) < 1e-4, "k={k}: {} vs {fd}", g[k]);
        }
    }
}

#[test]
fn gamma_without_words_is_persona_mean() {
    let a = array![[0.4, -0.3, 1.2], [2.0, 0.5, -1.0]];
    let gamma = update_gamma(&[0.0; 3], &[1.0; 3], &[0.0, 1.0], a.view(), 0.5, &[0.0; 3], 0.0, 1.0).unwrap();
    for k in 0..3 {
        assert_abs_diff_eq!(gamma[k], a[[1, k]], epsilon = 1e-6);
    }
}

#[test]
fn gamma_matches_gradient_ascent_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..10 {
        let problem = GammaProblem {
            prior_mean: vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            precision: rng.random_range(0.5..3.0),
            phi_colsums: vec![rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)],
            n: 10.0,
            vhat: vec![rng.random_range(0.1..1.0), rng.random_range(0.1..1.0)],
            log_zeta: rng.random_range(1.0..3.0),
        };
        let got = problem.maximize(&[0.0, 0.0]).unwrap();
        // plain fixed-step gradient ascent with backtracking
        let mut x = vec![0.0, 0.0];
        let mut step = 0.1;
        for _ in 0..200_000 {
            let g = problem.gradient(&x);
            let cand: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + step * b).collect();
            if problem.objective(&cand) >= problem.objective(&x) {
                x = cand;
            } else {
                step *= 0.5;
            }
            if g.iter().all(|v| v.abs() < 1e-9) {
                break;
            }
        }
        for k in 0..2 {
            assert_abs_diff_eq!(got[k], x[k], epsilon = 1e-3);
        }
        assert!(problem.gradient(&got).iter().all(|g| g.abs() < GAMMA_GRAD_TOL));
    }
}

#[test]
fn vhat_without_words() {
    let v = update_vhat(&[0.3, -2.0], 0.8, 0.0, 4.0).unwrap();
    for x in v {
        assert_abs_diff_eq!(x, 0.8, epsilon = 1e-9);
    }
}

#[test]
fn vhat_matches_bisection() {
    let v = update_vhat(&[0.0], 1.0, 1.0, 1.0).unwrap()[0];
    let r = |x: f64| vhat_residual(x, 0.0, 1.0, 1.0, 0.0);
    let (mut lo, mut hi) = (1e-10, 1e3);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if r(mid) > 0.0 { lo = mid } else { hi = mid }
    }
    assert_abs_diff_eq!(v, 0.5 * (lo + hi), epsilon = 1e-8);
    assert!(r(v).abs() < 1e-8);
}

#[test]
fn vhat_positive_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..1000 {
        let k = rng.random_range(1..6);
        let gamma: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
        let nu: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..3.0)).collect();
        let zeta = update_zeta(&gamma, &nu);
        let n = rng.random_range(0..500) as f64;
        let v = update_vhat(&gamma, rng.random_range(0.05..5.0), n, zeta).unwrap();
        assert!(v.iter().all(|&x| x > 0.0 && x.is_finite()));
    }
}

#[test]
fn vhat_residual_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..10 {
        let s = Setup::random(&mut rng, 3, 2, 5);
        let ctx = s.ctx();
        let doc = random_doc(&mut rng, 5, 5);
        let state = random_state(&mut rng, &ctx, &doc);
        for k in 0..3 {
            let r = vhat_residual(
                state.vhat[k],
                state.gamma[k],
                1.0 / ctx.process_var,
                doc.len() as f64,
                state.log_zeta,
            );
            let fd = central_diff(
                |x| {
                    let mut st = state.clone();
                    st.vhat[k] = x;
                    doc_elbo(&ctx, &doc, &st).total()
                },
                state.vhat[k],
                1e-6,
            );
            assert!(rel_err(r, fd) < 1e-4, "{r} vs {fd}");
        }
    }
}

#[test]
fn tau_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    for _ in 0..10 {
        let s = Setup::random(&mut rng, 3, 4, 5);
        let ctx = s.ctx();
        let doc = random_doc(&mut rng, 5, 3);
        let state = random_state(&mut rng, &ctx, &doc);
        let g = TauProblem::new(&ctx, &state.gamma).gradient(&state.tau).unwrap();
        for p in 0..4 {
            let fd = central_diff(
                |x| {
                    let mut st = state.clone();
                    st.tau[p] = x;
                    doc_elbo(&ctx, &doc, &st).total()
                },
                state.tau[p],
                1e-6,
            );
            assert!(rel_err(g[p], fd) < 1e-4, "p={p}: {} vs {fd}", g[p]);
        }
    }
}

#[test]
fn tau_gradient_public_form_agrees() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let s = Setup::random(&mut rng, 3, 2, 4);
    let delta = [1.5, 0.7];
    let total: f64 = delta.iter().sum();
    let mut s2 = s;
    s2.elog = delta.iter().map(|&d| digamma(d) - digamma(total)).collect();
    let gamma = [0.2, -0.4, 1.0];
    let tau = [0.3, 0.7];
    let a = TauProblem::new(&s2.ctx(), &gamma).gradient(&tau).unwrap();
    let b = tau_gradient(&tau, &delta, &gamma, s2.means.view(), Some(s2.var.view()), s2.process_var).unwrap();
    assert_eq!(a, b);
    assert!(tau_gradient(&[1.0, 0.0], &delta, &gamma, s2.means.view(), None, 1.0).is_err());
}

#[test]
fn tau_trivial_cases() {
    let a = array![[0.5, 0.1], [0.5, 0.1]];
    assert_eq!(update_tau(&[1.0], &[2.0], &[0.0, 0.0], a.slice(ndarray::s![0..1, ..]), None, 1.0), vec![1.0]);
    let g = tau_gradient(&[0.5, 0.5], &[1.0, 1.0], &[0.3, -0.2], a.view(), None, 1.0).unwrap();
    assert_abs_diff_eq!(g[0], g[1], epsilon = 1e-15);
    let t = update_tau(&[0.5, 0.5], &[1.0, 1.0], &[0.3, -0.2], a.view(), None, 1.0);
    assert_abs_diff_eq!(t[0], 0.5, epsilon = 1e-12);
}

#[test]
fn tau_matches_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    for _ in 0..10 {
        let s = Setup::random(&mut rng, 1, 2, 3);
        let ctx = s.ctx();
        let doc = random_doc(&mut rng, 3, 3);
        let state = random_state(&mut rng, &ctx, &doc);
        let got = TauProblem::new(&ctx, &state.gamma).maximize(&[0.5, 0.5]);
        let score = |t0: f64| {
            let mut st = state.clone();
            st.tau = vec![t0, 1.0 - t0];
            doc_elbo(&ctx, &doc, &st).total()
        };
        let best = (1..10_000).map(|i| i as f64 * 1e-4).max_by(|a, b| score(*a).total_cmp(&score(*b))).unwrap();
        assert_abs_diff_eq!(got[0], best, epsilon = 1e-3);
        assert_abs_diff_eq!(got.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
    }
}

#[test]
fn sweeps_are_monotone_and_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    for _ in 0..40 {
        let k = rng.random_range(2..6);
        let p = rng.random_range(1..4);
        let s = Setup::random(&mut rng, k, p, 12);
        let ctx = s.ctx();
        let doc = random_doc(&mut rng, 12, 8);
        let (state, elbo, trace) = infer_document_traced(&ctx, &doc).unwrap();
        for w in trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-8, "{} < {}", w[1], w[0]);
        }
        for row in state.phi.rows() {
            assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-10);
        }
        assert_abs_diff_eq!(state.tau.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
        assert!(state.vhat.iter().all(|&v| v > 0.0) && state.zeta() > 0.0);
        let (again, elbo2, _) = infer_document_traced(&ctx, &doc).unwrap();
        assert_eq!(state, again);
        assert_eq!(elbo, elbo2);
    }
}

/// `log p(w)` for a single-persona document by Monte Carlo over θ, with
/// the topic assignments summed out exactly.
fn mc_log_marginal(alpha: &[f64], var: f64, beta: &Array2<f64>, words: &[usize], samples: usize) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let k = alpha.len();
    let mut vals = Vec::with_capacity(samples);
    for _ in 0..samples {
        let theta: Vec<f64> =
            (0..k).map(|kk| alpha[kk] + var.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect();
        let pi = crate::model::softmax_pi(&theta);
        let lik: f64 = words.iter().map(|&w| (0..k).map(|kk| pi[kk] * beta[[kk, w]]).sum::<f64>()).product();
        vals.push(lik);
    }
    let n = samples as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    // delta method for the standard error of log(mean)
    (mean.ln(), sd / n.sqrt() / mean)
}

#[test]
fn bound_below_monte_carlo_marginal() {
    let beta = array![[0.7, 0.2, 0.1], [0.1, 0.3, 0.6]];
    let lb = beta.mapv(f64::ln);
    let means = array![[0.4, -0.3]];
    let mu0 = vec![0.0, 0.0];
    let ctx = DocContext {
        persona_means: means.view(),
        persona_var: None,
        process_var: 0.8,
        elog_kappa: vec![0.0],
        log_beta: lb.view(),
        mu0: &mu0,
    };
    let doc = Document::new(0, 0, vec![(0, 1), (2, 1)]);
    let (_, elbo) = infer_document_with(&ctx, &doc).unwrap();
    let (log_p, se) = mc_log_marginal(&[0.4, -0.3], 0.8, &beta, &[0, 2], 1_000_000);
    assert!(elbo.total() <= log_p + 3.0 * se, "{} > {log_p} (se {se})", elbo.total());
    // and not absurdly loose
    assert!(elbo.total() > log_p - 0.5);
}

#[test]
fn stats_merge_is_order_free() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let s = Setup::random(&mut rng, 3, 2, 6);
    let ctx = s.ctx();
    let docs: Vec<Document> = (0..6)
        .map(|i| {
            let mut d = random_doc(&mut rng, 6, 3);
            d.author = i % 2;
            d.step = i % 3;
            d
        })
        .collect();
    let results: Vec<_> = docs.iter().map(|d| infer_document_with(&ctx, d).unwrap()).collect();
    let fill = |range: std::ops::Range<usize>| {
        let mut st = SuffStats::new(3, 6, 2, 3, 2);
        for i in range {
            accumulate_stats(&mut st, &docs[i], &results[i].0, &results[i].1);
        }
        st
    };
    let (a, b) = (fill(0..3), fill(3..6));
    let mut ab = a.clone();
    ab.merge(&b);
    let mut ba = b.clone();
    ba.merge(&a);
    let whole = fill(0..6);
    for (x, y) in ab.beta_counts.iter().zip(&ba.beta_counts).chain(ab.alpha_rhs.iter().zip(&whole.alpha_rhs)) {
        assert_abs_diff_eq!(x, y, epsilon = 1e-12);
    }
    assert_eq!(ab.docs, 6);

    let one = fill(0..1);
    let (state, _) = &results[0];
    let d = &docs[0];
    for p in 0..2 {
        assert_eq!(one.tau_author[[d.author, p]], state.tau[p]);
        assert_eq!(one.tau_sq[[d.step, p]], state.tau[p] * state.tau[p]);
        assert_eq!(one.alpha_rhs[[d.step, p, 1]], (state.gamma[1] - 1.0) * state.tau[p]);
    }
}
