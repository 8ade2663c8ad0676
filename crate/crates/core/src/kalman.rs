//! Scalar Kalman filter and Rauch–Tung–Striebel smoother over the
//! variational observations, run independently for every (persona, topic).
//!
//! The chain starts from a prior `N(μ₀, Σ₀)` placed just before the first
//! step, so the first predicted variance is `Σ₀ + σΔ_0`.

use ndarray::{Array2, Array3, Axis};
use rayon::prelude::*;

/// Filtered and smoothed moments for one scalar chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainTrack {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Predicted variances `V_{t−1} + σΔ_t`.
    pub pvar: Vec<f64>,
}

/// Forward pass for one chain. `process_var[t]` is σΔ_t.
pub fn filter_chain(
    obs: &[f64],
    observed: &[bool],
    process_var: &[f64],
    measurement_noise: f64,
    mu0: f64,
    sigma0: f64,
) -> ChainTrack {
    let n = obs.len();
    let mut track = ChainTrack { m: Vec::with_capacity(n), v: Vec::with_capacity(n), pvar: Vec::with_capacity(n) };
    let (mut m_prev, mut v_prev) = (mu0, sigma0);
    for t in 0..n {
        let p = v_prev + process_var[t];
        let (m, v) = if observed[t] {
            let w = measurement_noise;
            ((obs[t] * p + m_prev * w) / (p + w), w * p / (p + w))
        } else {
            (m_prev, p)
        };
        track.m.push(m);
        track.v.push(v);
        track.pvar.push(p);
        m_prev = m;
        v_prev = v;
    }
    track
}

/// Backward pass; returns smoothed means and variances.
pub fn smooth_chain(track: &ChainTrack, process_var: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = track.m.len();
    let mut mean = track.m.clone();
    let mut var = track.v.clone();
    for t in (1..n).rev() {
        let p = track.pvar[t];
        let gain = track.v[t - 1] / p;
        mean[t - 1] = track.m[t - 1] * (process_var[t] / p) + mean[t] * gain;
        var[t - 1] = track.v[t - 1] + gain * gain * (var[t] - p);
    }
    (mean, var)
}

/// Which personas count as observed at each step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservationMask {
    /// T×P.
    pub observed: Array2<bool>,
}

impl ObservationMask {
    /// Default threshold on `Σ_d τ_{t,d,p}`.
    pub const DEFAULT_THRESHOLD: f64 = 1.0;

    pub fn from_tau_sums(tau_sum_tp: &Array2<f64>, threshold: f64) -> Self {
        Self { observed: tau_sum_tp.mapv(|s| s > threshold) }
    }

    pub fn all(t: usize, p: usize) -> Self {
        Self { observed: Array2::from_elem((t, p), true) }
    }
}

/// Filter and smoother output for the whole T×P×K grid.
#[derive(Clone, Debug, PartialEq)]
pub struct KalmanTrack {
    pub m: Array3<f64>,
    pub v: Array3<f64>,
    pub pvar: Array3<f64>,
    pub m_smooth: Array3<f64>,
    pub v_smooth: Array3<f64>,
}

/// Run forward filter and backward smoother over every (p, k) coordinate.
pub fn smooth_personas(
    alpha_hat: &Array3<f64>,
    mask: &ObservationMask,
    process_var: &[f64],
    measurement_noise: f64,
    mu0: &[f64],
    sigma0: f64,
) -> KalmanTrack {
    let (t_len, p_len, k_len) = alpha_hat.dim();
    let coords: Vec<(usize, usize)> = (0..p_len).flat_map(|p| (0..k_len).map(move |k| (p, k))).collect();
    let chains: Vec<(ChainTrack, Vec<f64>, Vec<f64>)> = coords
        .par_iter()
        .map(|&(p, k)| {
            let obs: Vec<f64> = (0..t_len).map(|t| alpha_hat[[t, p, k]]).collect();
            let seen: Vec<bool> = mask.observed.column(p).to_vec();
            let track = filter_chain(&obs, &seen, process_var, measurement_noise, mu0[k], sigma0);
            let (sm, sv) = smooth_chain(&track, process_var);
            (track, sm, sv)
        })
        .collect();

    let shape = (t_len, p_len, k_len);
    let mut out = KalmanTrack {
        m: Array3::zeros(shape),
        v: Array3::zeros(shape),
        pvar: Array3::zeros(shape),
        m_smooth: Array3::zeros(shape),
        v_smooth: Array3::zeros(shape),
    };
    for (&(p, k), (track, sm, sv)) in coords.iter().zip(chains) {
        for t in 0..t_len {
            out.m[[t, p, k]] = track.m[t];
            out.v[[t, p, k]] = track.v[t];
            out.pvar[[t, p, k]] = track.pvar[t];
            out.m_smooth[[t, p, k]] = sm[t];
            out.v_smooth[[t, p, k]] = sv[t];
        }
    }
    out
}

/// Convenience: smoothed means along `Axis(0)` for persona `p`, topic `k`.
pub fn trajectory(alpha: &Array3<f64>, p: usize, k: usize) -> Vec<f64> {
    alpha.index_axis(Axis(1), p).column(k).to_vec()
}
