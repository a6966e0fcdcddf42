//! Gradient descent driver.
//!
//! Plain momentum descent with a two-phase schedule: during the first
//! `exaggeration_iters` iterations the affinities are multiplied by
//! `exaggeration_factor` and momentum is `momentum_early`; afterwards P is
//! used as is and momentum switches to `momentum_late`. The triplet term is
//! never exaggerated.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::affinity::{affinities, AffinityMatrix};
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::loss::{combined_cost_grad, tste_cost_grad, tsne_cost_grad, CostGrad};
use crate::types::{DistanceKernel, EmbedConfig, Embedding, Lambda, TripletSet};

/// Standard deviation of the random initial coordinates.
pub const INIT_STD: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    /// Combined cost, always against the unexaggerated affinities.
    pub total_cost: f64,
    pub tsne_cost: f64,
    pub tste_cost: f64,
    /// Norm of the gradient actually used for the update.
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizerTrace {
    pub records: Vec<TraceRecord>,
    /// The mixing weight that was used, after resolving `auto`.
    pub lambda: f64,
}

impl OptimizerTrace {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iter,total_cost,tsne_cost,tste_cost,grad_norm")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.iter,
                fmt_f64(r.total_cost),
                fmt_f64(r.tsne_cost),
                fmt_f64(r.tste_cost),
                fmt_f64(r.grad_norm)
            )?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }
}

/// Picks λ so that `λ‖∇triplet‖ = (1 − λ)‖∇neighbor‖` at `y0`.
///
/// Returns 0 without triplets and 0.5 when both gradients vanish.
pub fn auto_lambda(p: &AffinityMatrix, t: &TripletSet, y0: ArrayView2<f64>, alpha: f64) -> Result<f64> {
    if t.is_empty() {
        return Ok(0.0);
    }
    let sne = tsne_cost_grad(p, y0)?.grad_norm();
    let ste = tste_cost_grad(t, y0, alpha)?.grad_norm();
    Ok(balance(sne, ste))
}

fn balance(sne_norm: f64, ste_norm: f64) -> f64 {
    let total = sne_norm + ste_norm;
    if total == 0.0 {
        0.5
    } else {
        sne_norm / total
    }
}

/// Seeded i.i.d. Gaussian coordinates with standard deviation `std`.
pub fn gaussian_coords(n: usize, dims: usize, std: f64, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std).expect("positive std");
    Array2::from_shape_simple_fn((n, dims), || normal.sample(&mut rng))
}

/// Initial layout for a cold start.
pub fn initial_coords(n: usize, cfg: &EmbedConfig) -> Array2<f64> {
    gaussian_coords(n, cfg.dims, INIT_STD, cfg.seed)
}

/// Resolves `cfg.lambda`, measuring gradients at `y0` for `auto`.
pub fn resolve_lambda(
    p: &AffinityMatrix,
    t: &TripletSet,
    y0: ArrayView2<f64>,
    cfg: &EmbedConfig,
) -> Result<f64> {
    match cfg.lambda {
        Lambda::Fixed(l) => Ok(l),
        Lambda::Auto => auto_lambda(p, t, y0, cfg.alpha),
    }
}

/// Computes affinities from `k` and optimizes from a seeded random start.
pub fn embed(k: &DistanceKernel, t: &TripletSet, cfg: &EmbedConfig) -> Result<(Embedding, OptimizerTrace)> {
    cfg.validate()?;
    t.check_range(k.len())?;
    let p = affinities(k, cfg.perplexity)?;
    let y0 = initial_coords(k.len(), cfg);
    embed_from(&p, k.ids(), t, y0, cfg)
}

/// Optimizes from the given starting coordinates with precomputed affinities.
pub fn embed_from(
    p: &AffinityMatrix,
    ids: &[String],
    t: &TripletSet,
    y0: Array2<f64>,
    cfg: &EmbedConfig,
) -> Result<(Embedding, OptimizerTrace)> {
    cfg.validate()?;
    let n = p.len();
    if y0.nrows() != n || ids.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: y0.nrows(),
        });
    }
    if y0.ncols() != cfg.dims {
        return Err(Error::DimensionMismatch {
            expected: cfg.dims,
            found: y0.ncols(),
        });
    }
    t.check_range(n)?;
    let lambda = resolve_lambda(p, t, y0.view(), cfg)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidConfig(format!("lambda {lambda} outside [0, 1]")));
    }
    log::debug!("embedding {n} objects, {} triplets, lambda {lambda}", t.len());

    let mut y = y0;
    let mut velocity = Array2::<f64>::zeros(y.dim());
    let mut trace = OptimizerTrace {
        records: Vec::with_capacity(cfg.total_iters),
        lambda,
    };
    for iter in 0..cfg.total_iters {
        let early = iter < cfg.exaggeration_iters;
        let exaggeration = if early { cfg.exaggeration_factor } else { 1.0 };
        let momentum = if early { cfg.momentum_early } else { cfg.momentum_late };

        let (CostGrad { cost, grad }, tsne_cost, tste_cost) =
            combined_cost_grad(p.p(), t, y.view(), lambda, cfg.alpha, exaggeration)?;
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !cost.is_finite() || !grad_norm.is_finite() {
            return Err(Error::NonFinite {
                iter,
                detail: format!(
                    "total {cost}, neighbor {tsne_cost}, triplet {tste_cost}, gradient norm {grad_norm}"
                ),
            });
        }
        trace.records.push(TraceRecord {
            iter,
            total_cost: cost,
            tsne_cost,
            tste_cost,
            grad_norm,
        });

        velocity *= momentum;
        velocity.scaled_add(-cfg.learning_rate, &grad);
        y += &velocity;
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            iter: cfg.total_iters,
            detail: "final coordinates are not finite".into(),
        });
    }
    Ok((Embedding::new(ids.to_vec(), y)?, trace))
}
