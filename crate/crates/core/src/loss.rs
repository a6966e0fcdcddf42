//! Costs and analytic gradients.
//!
//! * neighbor loss: `KL(P || Q)` with the Student-t (one degree of freedom)
//!   low-dimensional kernel `q_ij ∝ (1 + ‖y_i − y_j‖²)⁻¹`;
//! * triplet loss: negative log-likelihood of the heavy-tailed triplet model
//!   `p(i,j,k) = w_ij / (w_ij + w_ik)` with
//!   `w = (1 + d²/α)^{−(1+α)/2}`, so that every term is minimized;
//! * combined: `λ · triplet + (1 − λ) · neighbor`.
//!
//! Both losses are raw sums; no per-term averaging.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::affinity::AffinityMatrix;
use crate::error::{Error, Result};
use crate::types::{Triplet, TripletSet};

/// Floor applied to `p_ij` and `q_ij` inside the KL divergence.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CostGrad {
    pub cost: f64,
    pub grad: Array2<f64>,
}

impl CostGrad {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            cost: 0.0,
            grad: Array2::zeros((n, d)),
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.grad.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Normalized Student-t similarities `q` and the unnormalized `(1 + d²)⁻¹` terms.
pub fn student_t_q(y: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
    let n = y.nrows();
    let mut w = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 1.0 / (1.0 + sq_dist(y.row(i), y.row(j)));
            w[[i, j]] = v;
            w[[j, i]] = v;
        }
    }
    let z: f64 = w.sum();
    let q = if z > 0.0 { &w / z } else { w.clone() };
    (q, w)
}

fn check_square(p: &Array2<f64>, y: ArrayView2<f64>) -> Result<()> {
    if p.nrows() != y.nrows() || p.ncols() != y.nrows() {
        return Err(Error::DimensionMismatch {
            expected: p.nrows(),
            found: y.nrows(),
        });
    }
    Ok(())
}

/// Neighbor-loss cost against `p`, with the gradient taken against
/// `exaggeration · p`.
///
/// With `exaggeration = 1` this is the exact gradient of the cost. Larger
/// values give the early-exaggeration update direction while the returned
/// cost stays comparable across the schedule.
pub(crate) fn tsne_cost_grad_exaggerated(
    p: &Array2<f64>,
    y: ArrayView2<f64>,
    exaggeration: f64,
) -> CostGrad {
    let (n, d) = y.dim();
    let y_std = y.as_standard_layout();
    let ys = y_std.as_slice().expect("standard layout");
    let ps = p.as_slice().expect("standard layout");
    let row = |i: usize| &ys[i * d..(i + 1) * d];
    let weight = |i: usize, j: usize| {
        let (a, b) = (row(i), row(j));
        let mut s = 0.0;
        for c in 0..d {
            let t = a[c] - b[c];
            s += t * t;
        }
        1.0 / (1.0 + s)
    };

    // Row sums are reduced in index order, independent of thread count.
    let row_sums: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).filter(|&j| j != i).map(|j| weight(i, j)).sum())
        .collect();
    let z: f64 = row_sums.iter().sum();

    let per_row: Vec<(f64, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cost = 0.0;
            let mut g = vec![0.0; d];
            let yi = row(i);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let w = weight(i, j);
                let q = (w / z).max(PROB_FLOOR);
                let pij = ps[i * n + j].max(PROB_FLOOR);
                cost += pij * (pij / q).ln();
                let coef = 4.0 * (exaggeration * pij - w / z) * w;
                let yj = row(j);
                for c in 0..d {
                    g[c] += coef * (yi[c] - yj[c]);
                }
            }
            (cost, g)
        })
        .collect();

    let mut out = CostGrad::zeros(n, d);
    for (i, (cost, g)) in per_row.into_iter().enumerate() {
        out.cost += cost;
        for c in 0..d {
            out.grad[[i, c]] = g[c];
        }
    }
    out
}

/// `Σ_{i≠j} p_ij log(p_ij / q_ij)` and its gradient
/// `4 Σ_j (p_ij − q_ij)(1 + ‖y_i − y_j‖²)⁻¹ (y_i − y_j)`.
pub fn tsne_cost_grad(p: &AffinityMatrix, y: ArrayView2<f64>) -> Result<CostGrad> {
    check_square(p.p(), y)?;
    Ok(tsne_cost_grad_exaggerated(p.p(), y, 1.0))
}

/// Log of the triplet kernel `(1 + d²/α)^{−(1+α)/2}`.
fn log_tste_weight(sq: f64, alpha: f64) -> f64 {
    -0.5 * (1.0 + alpha) * (sq / alpha).ln_1p()
}

/// `ln(1 + eˣ)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Probability that `t` is satisfied under the heavy-tailed triplet model.
pub fn tste_prob(y: ArrayView2<f64>, t: Triplet, alpha: f64) -> f64 {
    let dij = sq_dist(y.row(t.i), y.row(t.j));
    let dik = sq_dist(y.row(t.i), y.row(t.k));
    let gap = log_tste_weight(dik, alpha) - log_tste_weight(dij, alpha);
    1.0 / (1.0 + gap.exp())
}

/// Crowd-kernel probability `(μ + d_ik²) / (2μ + d_ij² + d_ik²)`.
///
/// Coincides with [`tste_prob`] at `α = 1`, `μ = 1`.
pub fn ckl_prob(y: ArrayView2<f64>, t: Triplet, mu: f64) -> f64 {
    let dij = sq_dist(y.row(t.i), y.row(t.j));
    let dik = sq_dist(y.row(t.i), y.row(t.k));
    (mu + dik) / (2.0 * mu + dij + dik)
}

/// `−Σ log p(i,j,k)` over the triplets and its gradient.
pub fn tste_cost_grad(t: &TripletSet, y: ArrayView2<f64>, alpha: f64) -> Result<CostGrad> {
    let (n, d) = y.dim();
    t.check_range(n)?;
    let mut out = CostGrad::zeros(n, d);
    let scale = (1.0 + alpha) / alpha;
    let mut diff_ij = vec![0.0; d];
    let mut diff_ik = vec![0.0; d];
    for &tr in t {
        let (yi, yj, yk) = (y.row(tr.i), y.row(tr.j), y.row(tr.k));
        let (mut dij, mut dik) = (0.0, 0.0);
        for c in 0..d {
            diff_ij[c] = yi[c] - yj[c];
            diff_ik[c] = yi[c] - yk[c];
            dij += diff_ij[c] * diff_ij[c];
            dik += diff_ik[c] * diff_ik[c];
        }
        let gap = log_tste_weight(dik, alpha) - log_tste_weight(dij, alpha);
        out.cost += softplus(gap);
        // 1 - p, the probability of the violating outcome
        let miss = 1.0 / (1.0 + (-gap).exp());
        let g_ij = miss * scale / (1.0 + dij / alpha);
        let g_ik = miss * scale / (1.0 + dik / alpha);
        let mut grad = out.grad.view_mut();
        for c in 0..d {
            let a = g_ij * diff_ij[c];
            let b = g_ik * diff_ik[c];
            grad[[tr.i, c]] += a - b;
            grad[[tr.j, c]] -= a;
            grad[[tr.k, c]] += b;
        }
    }
    Ok(out)
}

/// Combined cost and gradient, plus the unweighted neighbor and triplet costs.
///
/// A term with exactly zero weight is not evaluated and reports cost 0, so
/// its inputs cannot influence the result.
pub(crate) fn combined_cost_grad(
    p: &Array2<f64>,
    t: &TripletSet,
    y: ArrayView2<f64>,
    lambda: f64,
    alpha: f64,
    exaggeration: f64,
) -> Result<(CostGrad, f64, f64)> {
    let (n, d) = y.dim();
    let sne = if lambda != 1.0 {
        tsne_cost_grad_exaggerated(p, y, exaggeration)
    } else {
        CostGrad::zeros(n, d)
    };
    let ste = if lambda != 0.0 && !t.is_empty() {
        tste_cost_grad(t, y, alpha)?
    } else {
        CostGrad::zeros(n, d)
    };
    let (cost, grad) = if lambda == 0.0 {
        (sne.cost, sne.grad)
    } else if lambda == 1.0 {
        (ste.cost, ste.grad)
    } else {
        let mut grad = sne.grad * (1.0 - lambda);
        grad.scaled_add(lambda, &ste.grad);
        (lambda * ste.cost + (1.0 - lambda) * sne.cost, grad)
    };
    Ok((CostGrad { cost, grad }, sne.cost, ste.cost))
}

/// `λ · triplet_loss + (1 − λ) · neighbor_loss`.
pub fn snack_cost_grad(
    p: &AffinityMatrix,
    t: &TripletSet,
    y: ArrayView2<f64>,
    lambda: f64,
    alpha: f64,
) -> Result<CostGrad> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidConfig(format!("lambda {lambda} outside [0, 1]")));
    }
    check_square(p.p(), y)?;
    combined_cost_grad(p.p(), t, y, lambda, alpha, 1.0).map(|(cg, _, _)| cg)
}
