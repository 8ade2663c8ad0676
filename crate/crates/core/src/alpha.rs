//! Variational observations α̂: the closed-form update and the regularized
//! linear system, solved step by step so that step t only sees α̂_{t−1}.

use ndarray::{Array2, Array3, ArrayView2, Axis};

use crate::error::{DapError, Result};
use crate::inference::SuffStats;
use serde::{Deserialize, Serialize};

use crate::linalg::{condition_number, Lu, Square};

/// Largest 1-norm condition number accepted by the regularized solve.
pub const MAX_CONDITION: f64 = 1e12;

/// `A X = rhs` for one time step; A is shared by all K columns.
#[derive(Clone, Debug)]
pub struct AlphaSystem {
    /// P×P: `1 + Σ_d τ_{d,p}²` on the diagonal, `ρ D_t` elsewhere.
    pub a_matrix: Square,
    /// P×K: `α̂_{t−1,p} + Σ_d (γ_d − 1) τ_{d,p}`.
    pub rhs: Array2<f64>,
}

impl AlphaSystem {
    pub fn new(prev: ArrayView2<'_, f64>, rhs_sum: ArrayView2<'_, f64>, tau_sq: &[f64], rho: f64, d_t: usize) -> Self {
        let p = tau_sq.len();
        let mut a = Square::zeros(p);
        for i in 0..p {
            for j in 0..p {
                a.set(i, j, if i == j { 1.0 + tau_sq[i] } else { rho * d_t as f64 });
            }
        }
        Self { a_matrix: a, rhs: &prev + &rhs_sum }
    }

    /// Solve with one factorisation reused for every topic column.
    pub fn solve(&self) -> Result<Array2<f64>> {
        let cond = condition_number(&self.a_matrix);
        if !(cond <= MAX_CONDITION) {
            return Err(DapError::RegularizerTooStrong { condition: cond });
        }
        let lu = Lu::factor(&self.a_matrix).ok_or(DapError::RegularizerTooStrong { condition: f64::INFINITY })?;
        let mut out = Array2::zeros(self.rhs.raw_dim());
        for (k, col) in self.rhs.axis_iter(Axis(1)).enumerate() {
            let x = lu.solve_refined(&self.a_matrix, &col.to_vec());
            out.column_mut(k).iter_mut().zip(x).for_each(|(o, v)| *o = v);
        }
        Ok(out)
    }

    /// ∞-norm of `A X − rhs`.
    pub fn residual(&self, x: ArrayView2<'_, f64>) -> f64 {
        let mut worst = 0.0_f64;
        for (k, col) in x.axis_iter(Axis(1)).enumerate() {
            let ax = self.a_matrix.mul_vec(&col.to_vec());
            for (p, v) in ax.iter().enumerate() {
                worst = worst.max((v - self.rhs[[p, k]]).abs());
            }
        }
        worst
    }
}

/// `α̂_{t,p} = (α̂_{t−1,p} + Σ_d (γ_d − 1) τ_{d,p}) / (1 + Σ_d τ_{d,p}²)`.
pub fn update_alpha_hat_unregularized(
    prev: ArrayView2<'_, f64>,
    rhs_sum: ArrayView2<'_, f64>,
    tau_sq: &[f64],
) -> Array2<f64> {
    let mut out = &prev + &rhs_sum;
    for (mut row, &s) in out.rows_mut().into_iter().zip(tau_sq) {
        row /= 1.0 + s;
    }
    out
}

/// Regularized update; `rho = 0` gives the closed form up to rounding.
pub fn update_alpha_hat_regularized(
    prev: ArrayView2<'_, f64>,
    rhs_sum: ArrayView2<'_, f64>,
    tau_sq: &[f64],
    rho: f64,
    d_t: usize,
) -> Result<Array2<f64>> {
    if !(rho >= 0.0) {
        return Err(DapError::InvalidArgument("rho must be non-negative".into()));
    }
    AlphaSystem::new(prev, rhs_sum, tau_sq, rho, d_t).solve()
}

/// Which persona-overlap penalty the α̂ step uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    /// `(D_t/2) ρ Σ_{p≠q} α̂_pᵀ Σ_t⁻¹ α̂_q` as is. Rewards personas pointing
    /// away from each other without limit, so EM can diverge.
    Pairwise,
    /// The pairwise sum plus `(D_t/2) ρ Σ_p ‖α̂_p‖²_{Σ_t⁻¹}`, which equals
    /// `(D_t/2) ρ ‖Σ_p α̂_p‖²_{Σ_t⁻¹}` and is bounded below by zero.
    #[default]
    Completed,
}

impl Penalty {
    /// Extra diagonal weight in the step system, in units of `ρ D_t`.
    fn diagonal(self) -> f64 {
        match self {
            Penalty::Pairwise => 0.0,
            Penalty::Completed => 1.0,
        }
    }
}

/// Recompute α̂ for all steps from E-step statistics. The first step uses
/// μ₀ in place of α̂_{t−1}. With `rho = 0` the closed form is used.
pub fn update_alpha_hat(
    stats: &SuffStats,
    mu0: &[f64],
    rho: f64,
    docs_per_step: &[usize],
    penalty: Penalty,
) -> Result<Array3<f64>> {
    let (t_len, p, k) = stats.alpha_rhs.dim();
    let mut out = Array3::zeros((t_len, p, k));
    let mut prev = Array2::from_shape_fn((p, k), |(_, kk)| mu0[kk]);
    for t in 0..t_len {
        let rhs = stats.alpha_rhs.index_axis(Axis(0), t);
        let mut tau_sq = stats.tau_sq.row(t).to_vec();
        let next = if rho == 0.0 {
            update_alpha_hat_unregularized(prev.view(), rhs, &tau_sq)
        } else {
            let shift = penalty.diagonal() * rho * docs_per_step[t] as f64;
            tau_sq.iter_mut().for_each(|s| *s += shift);
            update_alpha_hat_regularized(prev.view(), rhs, &tau_sq, rho, docs_per_step[t])?
        };
        out.index_axis_mut(Axis(0), t).assign(&next);
        prev = next;
    }
    Ok(out)
}

/// Shift every persona vector so its topic mean equals the mean of μ₀.
/// π(·) ignores such shifts.
pub fn center_alpha_hat(alpha_hat: &mut Array3<f64>, mu0: &[f64]) {
    let target = mu0.iter().sum::<f64>() / mu0.len() as f64;
    for mut lane in alpha_hat.lanes_mut(Axis(2)) {
        let m = lane.mean().unwrap_or(0.0);
        lane -= m - target;
    }
}
