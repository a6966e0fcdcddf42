//! Seeded synthetic datasets for benchmarks and tests.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::types::{FeatureMatrix, LabelVector};

/// Isotropic Gaussian blobs.
#[derive(Debug, Clone)]
pub struct Blobs {
    pub features: FeatureMatrix,
    /// Blob index of each point.
    pub blob: Vec<usize>,
    pub centers: Array2<f64>,
}

impl Blobs {
    pub fn labels(&self) -> LabelVector {
        LabelVector::new(self.blob.iter().map(|&b| b as i64).collect())
    }
}

/// `n_blobs × per_blob` points in `dims` dimensions.
///
/// Centers are Gaussian draws rescaled so the closest pair of centers is
/// exactly `separation` apart; points scatter around their center with
/// per-coordinate standard deviation `spread`. Points are listed blob by
/// blob.
pub fn gaussian_blobs(
    n_blobs: usize,
    per_blob: usize,
    dims: usize,
    separation: f64,
    spread: f64,
    seed: u64,
) -> Blobs {
    assert!(n_blobs >= 1 && per_blob >= 1 && dims >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Array2<f64> =
        Array2::from_shape_simple_fn((n_blobs, dims), || StandardNormal.sample(&mut rng));
    if n_blobs > 1 {
        let mut closest = f64::INFINITY;
        for a in 0..n_blobs {
            for b in (a + 1)..n_blobs {
                let d = (&centers.row(a) - &centers.row(b)).mapv(|x: f64| x * x).sum().sqrt();
                closest = closest.min(d);
            }
        }
        centers *= separation / closest;
    }
    let n = n_blobs * per_blob;
    let mut values = Array2::zeros((n, dims));
    let mut blob = Vec::with_capacity(n);
    for b in 0..n_blobs {
        for p in 0..per_blob {
            let row = b * per_blob + p;
            for c in 0..dims {
                let noise: f64 = StandardNormal.sample(&mut rng);
                values[[row, c]] = centers[[b, c]] + spread * noise;
            }
            blob.push(b);
        }
    }
    let ids = (0..n).map(|i| format!("p{i:04}")).collect();
    Blobs {
        features: FeatureMatrix::new(ids, values).expect("finite synthetic data"),
        blob,
        centers,
    }
}

/// Random balanced binary concept per blob, independent of blob geometry.
///
/// Returns the concept of each blob; half the blobs (rounded down) get
/// concept 1.
pub fn binary_concepts(n_blobs: usize, seed: u64) -> Vec<i64> {
    let mut concepts: Vec<i64> = (0..n_blobs).map(|b| i64::from(b < n_blobs / 2)).collect();
    concepts.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    concepts
}

/// Per-point labels from a per-blob labeling.
pub fn point_labels(blob: &[usize], per_blob_label: &[i64]) -> LabelVector {
    LabelVector::new(blob.iter().map(|&b| per_blob_label[b]).collect())
}
