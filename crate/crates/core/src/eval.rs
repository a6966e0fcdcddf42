//! Clustering and scoring of embeddings against ground truth.

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::affinity::affinities;
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::optimize::{embed_from, initial_coords};
use crate::triplets::sample_from_labels;
use crate::types::{DistanceKernel, EmbedConfig, LabelVector, Lambda, Triplet, TripletSet};

pub const MAX_LLOYD_ITERS: usize = 300;
pub const DEFAULT_RESTARTS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// Cluster id in `[0, k)` per object.
    pub clusters: Vec<usize>,
    /// k×d centroids; each non-empty cluster's centroid is its members' mean.
    pub centroids: Array2<f64>,
    /// Sum of squared distances to the assigned centroid.
    pub inertia: f64,
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Assigns each point to its nearest centroid (lowest index on ties).
fn assign(points: &Array2<f64>, centroids: &Array2<f64>) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let clusters = points
        .rows()
        .into_iter()
        .map(|p| {
            let p = p.to_slice().expect("standard layout");
            let (best, dist) = centroids
                .rows()
                .into_iter()
                .map(|c| sq(p, c.to_slice().expect("standard layout")))
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (c, d)| if d < acc.1 { (c, d) } else { acc });
            inertia += dist;
            best
        })
        .collect();
    (clusters, inertia)
}

/// Moves each non-empty cluster's centroid to its members' mean.
fn update(points: &Array2<f64>, clusters: &[usize], centroids: &mut Array2<f64>) {
    let (k, d) = centroids.dim();
    let mut sums = Array2::<f64>::zeros((k, d));
    let mut counts = vec![0usize; k];
    for (p, &c) in points.rows().into_iter().zip(clusters) {
        let mut row = sums.row_mut(c);
        row += &p;
        counts[c] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            let mean = &sums.row(c) / counts[c] as f64;
            centroids.row_mut(c).assign(&mean);
        }
    }
}

/// k-means++ seeding: first center uniform, then proportional to the
/// squared distance to the nearest chosen center.
fn plus_plus<R: Rng>(points: &Array2<f64>, k: usize, rng: &mut R) -> Array2<f64> {
    let n = points.nrows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let row = |i: usize| points.row(i).to_slice().expect("standard layout").to_vec();
    let mut nearest: Vec<f64> = (0..n).map(|i| sq(&row(i), &row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in nearest.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            // every point coincides with a chosen center
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        let c = row(next);
        for (i, w) in nearest.iter_mut().enumerate() {
            *w = w.min(sq(&row(i), &c));
        }
    }
    let d = points.ncols();
    let mut centroids = Array2::zeros((k, d));
    for (slot, &i) in chosen.iter().enumerate() {
        centroids.row_mut(slot).assign(&points.row(i));
    }
    centroids
}

/// One seeded k-means++ / Lloyd run. Also returns the inertia after every
/// assignment step.
pub fn kmeans_single<R: Rng>(y: ArrayView2<f64>, k: usize, rng: &mut R) -> Result<(ClusterAssignment, Vec<f64>)> {
    let n = y.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!("k = {k} must lie in [1, {n}]")));
    }
    let points = y.as_standard_layout().into_owned();
    let mut centroids = plus_plus(&points, k, rng);
    let (mut clusters, inertia) = assign(&points, &centroids);
    let mut history = vec![inertia];
    for _ in 0..MAX_LLOYD_ITERS {
        update(&points, &clusters, &mut centroids);
        let (next, inertia) = assign(&points, &centroids);
        history.push(inertia);
        if next == clusters {
            break;
        }
        clusters = next;
    }
    update(&points, &clusters, &mut centroids);
    let inertia = points
        .rows()
        .into_iter()
        .zip(&clusters)
        .map(|(p, &c)| {
            sq(
                p.to_slice().expect("standard layout"),
                centroids.row(c).to_slice().expect("standard layout"),
            )
        })
        .sum();
    Ok((
        ClusterAssignment {
            clusters,
            centroids,
            inertia,
        },
        history,
    ))
}

/// Best of `restarts` seeded runs by inertia.
///
/// Run `r` uses stream `r` of the seeded generator, so the runs for
/// `restarts = m` are a prefix of those for `restarts = m + 1`.
pub fn kmeans(y: ArrayView2<f64>, k: usize, seed: u64, restarts: usize) -> Result<ClusterAssignment> {
    let restarts = restarts.max(1);
    let runs = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            kmeans_single(y, k, &mut rng).map(|(a, _)| a)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(runs
        .into_iter()
        .reduce(|best, a| if a.inertia < best.inertia { a } else { best })
        .expect("at least one run"))
}

/// Modal ground-truth label of each cluster; ties go to the smallest label id.
pub fn modal_labels(clusters: &[usize], labels: &LabelVector) -> BTreeMap<usize, i64> {
    let mut counts: BTreeMap<usize, BTreeMap<i64, usize>> = BTreeMap::new();
    for (&c, &l) in clusters.iter().zip(&labels.labels) {
        *counts.entry(c).or_default().entry(l).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|(c, by_label)| {
            let mut best = (i64::MAX, 0usize);
            // ascending label order, so strict > keeps the smallest id on ties
            for (l, count) in by_label {
                if count > best.1 {
                    best = (l, count);
                }
            }
            (c, best.0)
        })
        .collect()
}

/// Fraction of objects whose cluster's modal label equals their own label.
pub fn majority_label_accuracy(clusters: &[usize], labels: &LabelVector) -> Result<f64> {
    if clusters.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: clusters.len(),
        });
    }
    if clusters.is_empty() {
        return Err(Error::InvalidInput("nothing to score".into()));
    }
    if let Some(pos) = labels.labels.iter().position(|&l| l < 0) {
        return Err(Error::Unlabeled(pos));
    }
    let modes = modal_labels(clusters, labels);
    let correct = clusters
        .iter()
        .zip(&labels.labels)
        .filter(|(c, l)| modes[c] == **l)
        .count();
    Ok(correct as f64 / clusters.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveConfig {
    /// Revealed-label counts to evaluate.
    pub n_values: Vec<usize>,
    /// Repetitions per point; run `r` uses seed `seed + r`.
    pub runs: usize,
    pub seed: u64,
    /// Optional subsample size for each triplet set.
    pub cap: Option<usize>,
    pub restarts: usize,
    /// Reveal labels in a seeded random order instead of file order.
    pub shuffle: bool,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            n_values: vec![0, 10, 50, 200],
            runs: 5,
            seed: 0,
            cap: None,
            restarts: DEFAULT_RESTARTS,
            shuffle: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub n: usize,
    pub mean_accuracy: f64,
    /// Standard error of the mean, `s / √runs` with the sample deviation `s`.
    pub sem: f64,
    pub seeds: usize,
    pub accuracies: Vec<f64>,
}

/// Mean and standard error of the mean.
pub fn mean_sem(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Label triplets for `n` revealed objects, revealing in `order`.
fn revealed_triplets(
    labels: &LabelVector,
    order: &[usize],
    n: usize,
    cap: Option<usize>,
    seed: u64,
) -> Result<TripletSet> {
    let permuted = LabelVector::new(order.iter().map(|&o| labels.labels[o]).collect());
    let t = sample_from_labels(&permuted, n, cap, seed)?;
    Ok(t.iter()
        .map(|t| Triplet {
            i: order[t.i],
            j: order[t.j],
            k: order[t.k],
        })
        .collect())
}

/// Accuracy of one run: embed with the revealed triplets, cluster with k
/// equal to the number of classes, score against all labels.
pub fn labeling_accuracy(
    p: &crate::affinity::AffinityMatrix,
    k: &DistanceKernel,
    labels: &LabelVector,
    t: &TripletSet,
    cfg: &EmbedConfig,
    restarts: usize,
) -> Result<f64> {
    let mut run_cfg = cfg.clone();
    if t.is_empty() {
        run_cfg.lambda = Lambda::Fixed(0.0);
    }
    let y0 = initial_coords(k.len(), &run_cfg);
    let (y, _) = embed_from(p, k.ids(), t, y0, &run_cfg)?;
    let assignment = kmeans(y.coords.view(), labels.num_classes(), run_cfg.seed, restarts)?;
    majority_label_accuracy(&assignment.clusters, labels)
}

/// Labeling accuracy as a function of the number of revealed labels.
pub fn labeling_curve(
    k: &DistanceKernel,
    labels: &LabelVector,
    cfg: &EmbedConfig,
    curve: &CurveConfig,
) -> Result<Vec<CurvePoint>> {
    let n = k.len();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    if let Some(pos) = labels.labels.iter().position(|&l| l < 0) {
        return Err(Error::Unlabeled(pos));
    }
    if let Some(&bad) = curve.n_values.iter().find(|&&v| v > n) {
        return Err(Error::InvalidInput(format!("n = {bad} exceeds {n} objects")));
    }
    if curve.runs == 0 {
        return Err(Error::InvalidInput("runs must be positive".into()));
    }
    cfg.validate()?;
    let p = affinities(k, cfg.perplexity)?;

    let mut accuracies = vec![Vec::with_capacity(curve.runs); curve.n_values.len()];
    for r in 0..curve.runs {
        let run_seed = curve.seed.wrapping_add(r as u64);
        let mut order: Vec<usize> = (0..n).collect();
        if curve.shuffle {
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(run_seed));
        }
        let run_cfg = EmbedConfig {
            seed: run_seed,
            ..cfg.clone()
        };
        for (slot, &revealed) in curve.n_values.iter().enumerate() {
            let t = revealed_triplets(labels, &order, revealed, curve.cap, run_seed)?;
            let acc = labeling_accuracy(&p, k, labels, &t, &run_cfg, curve.restarts)?;
            log::info!("n = {revealed}, run {r}: {} triplets, accuracy {acc:.4}", t.len());
            accuracies[slot].push(acc);
        }
    }
    Ok(curve
        .n_values
        .iter()
        .zip(accuracies)
        .map(|(&n, accs)| {
            let (mean_accuracy, sem) = mean_sem(&accs);
            CurvePoint {
                n,
                mean_accuracy,
                sem,
                seeds: accs.len(),
                accuracies: accs,
            }
        })
        .collect())
}

pub fn write_curve_csv<W: Write>(points: &[CurvePoint], mut out: W) -> std::io::Result<()> {
    writeln!(out, "n,mean_accuracy,sem,seeds")?;
    for p in points {
        writeln!(out, "{},{},{},{}", p.n, fmt_f64(p.mean_accuracy), fmt_f64(p.sem), p.seeds)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn one_cluster_is_global_mean() {
        let y = array![[0.0, 0.0], [2.0, 0.0], [4.0, 3.0]];
        let a = kmeans(y.view(), 1, 3, 4).unwrap();
        assert_eq!(a.clusters, vec![0, 0, 0]);
        assert!((a.centroids[[0, 0]] - 2.0).abs() < 1e-15);
        assert!((a.centroids[[0, 1]] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn k_equals_n_has_zero_inertia() {
        let y = array![[0.0, 0.0], [2.0, 0.0], [4.0, 3.0], [-1.0, 7.0]];
        let a = kmeans(y.view(), 4, 11, 3).unwrap();
        assert_eq!(a.inertia, 0.0);
        let mut ids = a.clusters.clone();
        ids.sort_unstable();
        assert_eq!(ids, vec![0, 1, 2, 3]);
    }

    #[test]
    fn k_larger_than_n_errors() {
        let y = array![[0.0], [1.0]];
        assert!(kmeans(y.view(), 3, 0, 1).is_err());
        assert!(kmeans(y.view(), 0, 0, 1).is_err());
    }

    #[test]
    fn perfect_and_single_cluster_accuracy() {
        let labels = LabelVector::new(vec![4, 4, 7, 7, 9, 9]);
        assert_eq!(majority_label_accuracy(&[2, 2, 0, 0, 1, 1], &labels).unwrap(), 1.0);
        let acc = majority_label_accuracy(&[0; 6], &labels).unwrap();
        assert!((acc - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn modal_ties_pick_smallest_label() {
        let labels = LabelVector::new(vec![5, 3, 3, 5]);
        let modes = modal_labels(&[0, 0, 1, 1], &labels);
        assert_eq!(modes[&0], 3);
        assert_eq!(modes[&1], 3);
    }

    #[test]
    fn unlabeled_object_errors() {
        let labels = LabelVector::new(vec![0, -1]);
        assert!(matches!(
            majority_label_accuracy(&[0, 0], &labels),
            Err(Error::Unlabeled(1))
        ));
    }

    #[test]
    fn sem_of_constant_is_zero() {
        assert_eq!(mean_sem(&[0.5, 0.5, 0.5]), (0.5, 0.0));
        let (m, s) = mean_sem(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn revealed_triplets_map_back_through_order() {
        let labels = LabelVector::new(vec![0, 1, 0]);
        let order = vec![2, 0, 1];
        let t = revealed_triplets(&labels, &order, 3, None, 0).unwrap();
        assert_eq!(
            t.triplets,
            vec![Triplet { i: 2, j: 0, k: 1 }, Triplet { i: 0, j: 2, k: 1 }]
        );
    }
}
