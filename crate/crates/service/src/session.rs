//! Session state machine, independent of the HTTP layer.

use std::sync::{Arc, Mutex, MutexGuard};

use ndarray::Array2;
use serde::Serialize;
use snack_core::affinity::affinities;
use snack_core::optimize::{embed_from, gaussian_coords, initial_coords};
use snack_core::triplets::expand_selection;
use snack_core::{AffinityMatrix, DistanceKernel, EmbedConfig, IdIndex, Lambda, TripletSet};

use crate::error::ApiError;

/// Standard deviation of the jitter added to a warm start.
pub const WARM_START_JITTER: f64 = 1e-6;

/// A kernel the server can open sessions on.
#[derive(Debug)]
pub struct Dataset {
    pub name: String,
    pub kernel: DistanceKernel,
    index: IdIndex,
}

impl Dataset {
    pub fn new(name: impl Into<String>, kernel: DistanceKernel) -> Self {
        let index = IdIndex::new(kernel.ids().to_vec()).expect("kernel ids are unique");
        Self {
            name: name.into(),
            kernel,
            index,
        }
    }

    pub fn index(&self) -> &IdIndex {
        &self.index
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Idle,
    Embedding,
    Error,
}

/// Latest completed revision plus bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub coords: Array2<f64>,
    pub revision: u64,
    pub status: Status,
    pub triplet_count: usize,
    pub error: Option<String>,
}

/// Per-call changes to the session configuration for one re-embed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub lambda: Option<Lambda>,
    pub alpha: Option<f64>,
    pub total_iters: Option<usize>,
    pub exaggeration_iters: Option<usize>,
    pub learning_rate: Option<f64>,
}

#[derive(Debug)]
struct Inner {
    triplets: TripletSet,
    coords: Array2<f64>,
    revision: u64,
    status: Status,
    error: Option<String>,
}

/// One expert's session: dataset, cached affinities, accumulated triplets and
/// the coordinates of the latest completed revision.
///
/// Invariants: the triplet list only grows; `revision` increases by exactly
/// one per completed re-embed; coordinates are replaced only on completion.
#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub dataset: Arc<Dataset>,
    p: AffinityMatrix,
    cfg: EmbedConfig,
    inner: Mutex<Inner>,
}

/// Inputs captured when a re-embed claims the session.
#[derive(Debug)]
pub struct ReembedJob {
    y0: Array2<f64>,
    triplets: TripletSet,
    cfg: EmbedConfig,
}

impl Session {
    /// Computes affinities and the first layout (revision 1). Blocking.
    pub fn create(id: String, dataset: Arc<Dataset>, cfg: EmbedConfig) -> Result<Self, ApiError> {
        let cfg = EmbedConfig {
            lambda: Lambda::Auto,
            ..cfg
        };
        cfg.validate()?;
        let p = affinities(&dataset.kernel, cfg.perplexity)?;
        let first = EmbedConfig {
            lambda: Lambda::Fixed(0.0),
            ..cfg.clone()
        };
        let y0 = initial_coords(p.len(), &first);
        let (y, _) = embed_from(&p, dataset.kernel.ids(), &TripletSet::default(), y0, &first)?;
        Ok(Self {
            id,
            dataset,
            p,
            cfg,
            inner: Mutex::new(Inner {
                triplets: TripletSet::default(),
                coords: y.coords,
                revision: 1,
                status: Status::Idle,
                error: None,
            }),
        })
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    pub fn snapshot(&self) -> Snapshot {
        let inner = self.lock();
        Snapshot {
            coords: inner.coords.clone(),
            revision: inner.revision,
            status: inner.status,
            triplet_count: inner.triplets.len(),
            error: inner.error.clone(),
        }
    }

    pub fn triplets(&self) -> TripletSet {
        self.lock().triplets.clone()
    }

    /// Expands one screen and appends its triplets; returns how many were added.
    pub fn submit_selection(
        &self,
        reference: &str,
        selected: &[String],
        shown: &[String],
    ) -> Result<(usize, usize), ApiError> {
        let index = self.dataset.index();
        let resolve = |id: &str| {
            index
                .index_of(id)
                .ok_or_else(|| ApiError::BadRequest(format!("unknown id `{id}`")))
        };
        let reference = resolve(reference)?;
        let selected = selected.iter().map(|s| resolve(s)).collect::<Result<Vec<_>, _>>()?;
        let shown = shown.iter().map(|s| resolve(s)).collect::<Result<Vec<_>, _>>()?;
        let added = expand_selection(reference, &selected, &shown)?;

        let mut inner = self.lock();
        if inner.status == Status::Embedding {
            return Err(ApiError::Busy(self.id.clone()));
        }
        inner.triplets.extend(&added);
        Ok((added.len(), inner.triplets.len()))
    }

    /// Marks the session busy and captures the warm start.
    pub fn claim_reembed(&self, overrides: &Overrides) -> Result<ReembedJob, ApiError> {
        let mut cfg = self.cfg.clone();
        if let Some(l) = overrides.lambda {
            cfg.lambda = l;
        }
        if let Some(a) = overrides.alpha {
            cfg.alpha = a;
        }
        if let Some(t) = overrides.total_iters {
            cfg.total_iters = t;
        }
        if let Some(e) = overrides.exaggeration_iters {
            cfg.exaggeration_iters = e;
        }
        if let Some(lr) = overrides.learning_rate {
            cfg.learning_rate = lr;
        }
        cfg.validate()?;

        let mut inner = self.lock();
        if inner.status == Status::Embedding {
            return Err(ApiError::Busy(self.id.clone()));
        }
        if inner.triplets.is_empty() && matches!(cfg.lambda, Lambda::Fixed(l) if l > 0.0) {
            return Err(ApiError::BadRequest(
                "a positive lambda needs at least one triplet".into(),
            ));
        }
        let (n, d) = inner.coords.dim();
        let jitter = gaussian_coords(n, d, WARM_START_JITTER, cfg.seed.wrapping_add(inner.revision));
        let job = ReembedJob {
            y0: &inner.coords + &jitter,
            triplets: inner.triplets.clone(),
            cfg,
        };
        inner.status = Status::Embedding;
        inner.error = None;
        Ok(job)
    }

    /// Runs a claimed job and publishes the result. Blocking.
    pub fn run(&self, job: ReembedJob) -> Result<u64, ApiError> {
        let result = embed_from(&self.p, self.dataset.kernel.ids(), &job.triplets, job.y0, &job.cfg);
        let mut inner = self.lock();
        match result {
            Ok((y, trace)) => {
                log::info!(
                    "session {}: revision {} with {} triplets, lambda {}",
                    self.id,
                    inner.revision + 1,
                    job.triplets.len(),
                    trace.lambda
                );
                inner.coords = y.coords;
                inner.revision += 1;
                inner.status = Status::Idle;
                Ok(inner.revision)
            }
            Err(e) => {
                log::warn!("session {}: re-embed failed: {e}", self.id);
                inner.status = Status::Error;
                inner.error = Some(e.to_string());
                Err(e.into())
            }
        }
    }
}
