//! Gaussian neighbor affinities with per-row perplexity calibration.
//!
//! Row `i` of the conditional matrix is
//! `p_{j|i} ∝ exp(-K_ij² / 2σ_i²)` over `j ≠ i`, where `σ_i` is found by
//! bisection so that `2^H(p_{·|i})` equals the requested perplexity. The
//! joint matrix is `p_ij = (p_{j|i} + p_{i|j}) / 2N`.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::DistanceKernel;

pub const SIGMA_MIN: f64 = 1e-20;
pub const SIGMA_MAX: f64 = 1e20;
pub const MAX_BISECTIONS: usize = 64;
/// Absolute tolerance on the realized perplexity.
pub const PERPLEXITY_TOL: f64 = 1e-5;

/// Symmetric joint neighbor probabilities summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    p: Array2<f64>,
}

impl AffinityMatrix {
    pub fn p(&self) -> &Array2<f64> {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.p.nrows() == 0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.p
    }
}

/// Per-object Gaussian bandwidths.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaVector {
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaFit {
    pub sigma: f64,
    /// Perplexity realized at `sigma`.
    pub perplexity: f64,
    /// False when the bisection cap was hit before reaching tolerance.
    pub converged: bool,
}

/// Fills `out` with the normalized conditional row and returns its entropy in bits.
///
/// Logits are shifted by the smallest squared distance so the largest term
/// is exactly `exp(0)` and the normalizer is at least one.
fn conditional_row(dist_row: &[f64], self_index: usize, sigma: f64, out: &mut [f64]) -> f64 {
    let beta = 1.0 / (2.0 * sigma * sigma);
    let min_sq = dist_row
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != self_index)
        .map(|(_, d)| d * d)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (j, (&d, o)) in dist_row.iter().zip(out.iter_mut()).enumerate() {
        *o = if j == self_index {
            0.0
        } else {
            (-(d * d - min_sq) * beta).exp()
        };
        sum += *o;
    }
    let mut entropy = 0.0;
    for o in out.iter_mut() {
        *o /= sum;
        if *o > 0.0 {
            entropy -= *o * o.log2();
        }
    }
    entropy
}

/// Entropy in bits of the conditional distribution of one row at `sigma`.
pub fn row_entropy_bits(dist_row: &[f64], self_index: usize, sigma: f64) -> f64 {
    let mut buf = vec![0.0; dist_row.len()];
    conditional_row(dist_row, self_index, sigma, &mut buf)
}

/// Finds σ for one row so the conditional distribution has the target perplexity.
///
/// Bisects on `ln σ` inside `[1e-20, 1e20]`. Returns the best σ seen with
/// `converged = false` if tolerance is not met within 64 steps, which
/// happens when the target lies outside what the row can realize (e.g.
/// more tied nearest neighbors than the perplexity).
pub fn calibrate_sigma(dist_row: &[f64], self_index: usize, perplexity: f64) -> Result<SigmaFit> {
    let n = dist_row.len();
    if !(perplexity < n as f64) {
        return Err(Error::InfeasiblePerplexity { perplexity, n });
    }
    let degenerate = dist_row
        .iter()
        .enumerate()
        .all(|(j, &d)| j == self_index || d <= 0.0);
    if degenerate {
        return Err(Error::DegenerateRow(self_index));
    }

    let target = perplexity.log2();
    let mut buf = vec![0.0; n];
    let (mut lo, mut hi) = (SIGMA_MIN.ln(), SIGMA_MAX.ln());
    let mut best = SigmaFit {
        sigma: 1.0,
        perplexity: f64::NAN,
        converged: false,
    };
    let mut best_gap = f64::INFINITY;
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let sigma = mid.exp();
        let h = conditional_row(dist_row, self_index, sigma, &mut buf);
        let realized = h.exp2();
        let gap = (realized - perplexity).abs();
        if gap < best_gap {
            best_gap = gap;
            best = SigmaFit {
                sigma,
                perplexity: realized,
                converged: gap < PERPLEXITY_TOL,
            };
        }
        // Keep refining past the tolerance so that equivalent rows land on
        // the same sigma regardless of where the bracket started.
        if gap <= 1e-12 * perplexity || mid == lo || mid == hi {
            break;
        }
        // entropy grows with sigma
        if h > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if best.converged {
        return Ok(best);
    }
    log::warn!(
        "row {self_index}: perplexity {perplexity} not reached, best {} at sigma {}",
        best.perplexity,
        best.sigma
    );
    Ok(best)
}

/// Calibrates every row of the kernel; rows are independent.
pub fn calibrate_sigmas(k: &DistanceKernel, perplexity: f64) -> Result<(SigmaVector, Vec<SigmaFit>)> {
    let dist = k.dist();
    let n = k.len();
    if !(perplexity < n as f64) {
        return Err(Error::InfeasiblePerplexity { perplexity, n });
    }
    let fits = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = dist.row(i);
            calibrate_sigma(row.as_slice().expect("standard layout"), i, perplexity)
        })
        .collect::<Result<Vec<_>>>()?;
    let sigma = fits.iter().map(|f| f.sigma).collect();
    Ok((SigmaVector { sigma }, fits))
}

/// Row-stochastic conditional matrix `p_{j|i}` with a zero diagonal.
pub fn conditional_p(k: &DistanceKernel, sigma: &SigmaVector) -> Result<Array2<f64>> {
    let n = k.len();
    if sigma.sigma.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: sigma.sigma.len(),
        });
    }
    if let Some(s) = sigma.sigma.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidInput(format!("sigma must be positive, got {s}")));
    }
    let dist = k.dist();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut out = vec![0.0; n];
            conditional_row(
                dist.row(i).as_slice().expect("standard layout"),
                i,
                sigma.sigma[i],
                &mut out,
            );
            out
        })
        .collect();
    let mut cond = Array2::zeros((n, n));
    for (i, row) in rows.into_iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if n > 1 && !((sum - 1.0).abs() < 1e-6) {
            return Err(Error::RowCollapsed(i));
        }
        cond.row_mut(i).assign(&ndarray::Array1::from(row));
    }
    Ok(cond)
}

/// Symmetrized joint probabilities `(c + cᵀ) / 2N`.
pub fn joint_p(cond: &Array2<f64>) -> Result<AffinityMatrix> {
    let (n, m) = cond.dim();
    if n != m {
        return Err(Error::DimensionMismatch { expected: n, found: m });
    }
    if cond.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidInput("conditional matrix has invalid entries".into()));
    }
    let scale = 1.0 / (2.0 * n as f64);
    let mut p = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[[i, j]] = (cond[[i, j]] + cond[[j, i]]) * scale;
            }
        }
    }
    Ok(AffinityMatrix { p })
}

/// Full pipeline from a kernel to the joint affinity matrix.
pub fn affinities(k: &DistanceKernel, perplexity: f64) -> Result<AffinityMatrix> {
    let (sigma, _) = calibrate_sigmas(k, perplexity)?;
    joint_p(&conditional_p(k, &sigma)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn kernel(m: Array2<f64>) -> DistanceKernel {
        let ids = (0..m.nrows()).map(|i| i.to_string()).collect();
        DistanceKernel::new(ids, m).unwrap()
    }

    #[test]
    fn two_equal_neighbors_give_one_bit() {
        let row = [0.0, 2.0, 2.0];
        let fit = calibrate_sigma(&row, 0, 2.0).unwrap();
        assert!(fit.converged);
        for sigma in [1e-3, 1.0, 1e3] {
            assert!((row_entropy_bits(&row, 0, sigma) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn calibrated_row_reaches_target() {
        let row = [0.0, 1.0, 2.0, 3.0];
        let fit = calibrate_sigma(&row, 0, 2.0).unwrap();
        assert!(fit.converged);
        let recomputed = row_entropy_bits(&row, 0, fit.sigma).exp2();
        assert!((recomputed - 2.0).abs() < 1e-5, "{recomputed}");
    }

    #[test]
    fn perplexity_at_least_n_is_rejected() {
        let row = [0.0, 1.0, 2.0];
        assert!(matches!(
            calibrate_sigma(&row, 0, 3.0),
            Err(Error::InfeasiblePerplexity { .. })
        ));
    }

    #[test]
    fn all_zero_row_is_degenerate() {
        assert!(matches!(
            calibrate_sigma(&[0.0, 0.0, 0.0], 1, 1.5),
            Err(Error::DegenerateRow(1))
        ));
    }

    #[test]
    fn unreachable_target_returns_best_with_flag() {
        // Three tied nearest neighbors cannot produce perplexity below 3.
        let row = [0.0, 1.0, 1.0, 1.0, 5.0];
        let fit = calibrate_sigma(&row, 0, 2.0).unwrap();
        assert!(!fit.converged);
        assert!((fit.perplexity - 3.0).abs() < 1e-3);
    }

    #[test]
    fn equidistant_conditionals_are_half() {
        let k = kernel(array![[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]]);
        let sigma = SigmaVector { sigma: vec![0.7, 1.3, 4.0] };
        let c = conditional_p(&k, &sigma).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 0.0 } else { 0.5 };
                assert_eq!(c[[i, j]], expected);
            }
        }
    }

    #[test]
    fn conditional_ratio_matches_direct_evaluation() {
        let k = kernel(array![[0.0, 1.0, 10.0], [1.0, 0.0, 9.0], [10.0, 9.0, 0.0]]);
        let sigma = SigmaVector { sigma: vec![1.0; 3] };
        let c = conditional_p(&k, &sigma).unwrap();
        let expected = (-0.5f64).exp() / (-50.0f64).exp();
        let ratio = c[[0, 1]] / c[[0, 2]];
        assert!((ratio / expected - 1.0).abs() < 1e-10, "{ratio} vs {expected}");
        assert!((c.row(0).sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn joint_at_two_points_is_half() {
        let c = array![[0.0, 1.0], [1.0, 0.0]];
        let p = joint_p(&c).unwrap();
        assert_eq!(p.p()[[0, 1]], 0.5);
        assert_eq!(p.p()[[1, 0]], 0.5);
    }

    #[test]
    fn joint_of_one_sided_conditional() {
        // Not row-stochastic, only exercises the arithmetic.
        let c = array![[0.0, 1.0], [0.0, 0.0]];
        let p = joint_p(&c).unwrap();
        assert_eq!(p.p()[[0, 1]], 0.25);
        assert_eq!(p.p()[[1, 0]], 0.25);
    }

    #[test]
    fn scaling_distances_is_absorbed_by_sigma() {
        let k = kernel(array![
            [0.0, 1.0, 2.0, 4.0, 3.0],
            [1.0, 0.0, 1.5, 2.5, 2.0],
            [2.0, 1.5, 0.0, 1.0, 3.5],
            [4.0, 2.5, 1.0, 0.0, 1.2],
            [3.0, 2.0, 3.5, 1.2, 0.0],
        ]);
        let scaled = kernel(k.dist() * 7.5);
        let a = affinities(&k, 2.5).unwrap();
        let b = affinities(&scaled, 2.5).unwrap();
        let diff = (a.p() - b.p()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff < 1e-8, "{diff}");
    }
}
