//! Concept embeddings that fuse a machine distance kernel with human triplet
//! constraints.
//!
//! The pipeline is:
//!
//! 1. build a [`DistanceKernel`] from features ([`kernels::euclidean_kernel`])
//!    or token lists ([`kernels::assignment_kernel`]);
//! 2. turn it into neighbor affinities ([`affinity::affinities`]);
//! 3. minimize `λ · triplet_nll + (1 − λ) · KL(P‖Q)` over the output
//!    coordinates ([`optimize::embed`]);
//! 4. score the result ([`triplets::violation_fraction`],
//!    [`eval::majority_label_accuracy`]).
//!
//! ```
//! use snack_core::{kernels, optimize, synthetic, triplets, EmbedConfig, Lambda};
//!
//! let blobs = synthetic::gaussian_blobs(3, 10, 5, 10.0, 1.0, 0);
//! let kernel = kernels::euclidean_kernel(&blobs.features);
//! let t = triplets::sample_from_labels(&blobs.labels(), 30, Some(200), 0).unwrap();
//! let cfg = EmbedConfig { perplexity: 5.0, lambda: Lambda::Auto, ..EmbedConfig::default() };
//! let (y, trace) = optimize::embed(&kernel, &t, &cfg).unwrap();
//! assert_eq!(y.len(), 30);
//! assert!(trace.lambda > 0.0 && trace.lambda < 1.0);
//! ```

pub mod affinity;
pub mod error;
pub mod eval;
pub mod io;
pub mod kernels;
pub mod loss;
pub mod optimize;
pub mod synthetic;
pub mod triplets;
mod types;

pub use affinity::AffinityMatrix;
pub use error::{Error, Result};
pub use loss::CostGrad;
pub use optimize::{OptimizerTrace, TraceRecord};
pub use types::{
    DistanceKernel, EmbedConfig, Embedding, FeatureMatrix, IdIndex, LabelVector, Lambda, Triplet,
    TripletSet, KERNEL_SYMMETRY_TOL, UNREVEALED,
};
