//! Domain types shared by every module.
//!
//! Identifiers only exist at the edges (files, HTTP). Everything numeric
//! works on dense 0-based indices, with [`IdIndex`] translating between the
//! two.

use std::collections::HashMap;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Symmetry and zero-diagonal tolerance applied when validating a kernel.
pub const KERNEL_SYMMETRY_TOL: f64 = 1e-9;

/// Bijection between string identifiers and dense indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdIndex {
    ids: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl IdIndex {
    pub fn new(ids: Vec<String>) -> Result<Self> {
        let mut lookup = HashMap::with_capacity(ids.len());
        for (index, id) in ids.iter().enumerate() {
            if lookup.insert(id.clone(), index).is_some() {
                return Err(Error::InvalidInput(format!("duplicate id `{id}`")));
            }
        }
        Ok(Self { ids, lookup })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn resolve(&self, i: &str, j: &str, k: &str) -> Result<Triplet> {
        let find = |id: &str| {
            self.index_of(id)
                .ok_or_else(|| Error::UnknownId(id.to_string()))
        };
        Triplet::new(find(i)?, find(j)?, find(k)?)
    }

    pub fn unresolve(&self, t: Triplet) -> (&str, &str, &str) {
        (self.id(t.i), self.id(t.j), self.id(t.k))
    }
}

fn check_unique(ids: &[String]) -> Result<()> {
    IdIndex::new(ids.to_vec()).map(|_| ())
}

/// N objects by D machine features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub ids: Vec<String>,
    pub values: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(ids: Vec<String>, values: Array2<f64>) -> Result<Self> {
        let (n, d) = values.dim();
        if n == 0 || d == 0 {
            return Err(Error::InvalidInput(
                "feature matrix needs at least one row and one column".into(),
            ));
        }
        if ids.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: ids.len(),
            });
        }
        if let Some(((row, _), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite feature value for `{}`",
                ids[row]
            )));
        }
        check_unique(&ids)?;
        Ok(Self { ids, values })
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }
}

/// Symmetric, zero-diagonal, non-negative N×N distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceKernel {
    ids: Vec<String>,
    dist: Array2<f64>,
}

impl DistanceKernel {
    /// Validates the matrix and symmetrizes it by averaging mirrored entries.
    ///
    /// Mirrored entries may differ by at most `1e-9` (relative for large
    /// distances) and the diagonal must be within `1e-9` of zero; anything
    /// further off is rejected rather than repaired.
    pub fn new(ids: Vec<String>, dist: Array2<f64>) -> Result<Self> {
        let (rows, cols) = dist.dim();
        if rows != cols {
            return Err(Error::InvalidKernel(format!(
                "matrix is {rows}x{cols}, expected square"
            )));
        }
        if ids.len() != rows {
            return Err(Error::DimensionMismatch {
                expected: rows,
                found: ids.len(),
            });
        }
        if rows == 0 {
            return Err(Error::InvalidKernel("empty kernel".into()));
        }
        check_unique(&ids)?;
        let mut dist = dist;
        for ((i, j), &v) in dist.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::InvalidKernel(format!(
                    "non-finite entry at ({i}, {j})"
                )));
            }
            if v < 0.0 {
                return Err(Error::InvalidKernel(format!(
                    "negative entry {v} at ({i}, {j})"
                )));
            }
        }
        for i in 0..rows {
            if dist[[i, i]] > KERNEL_SYMMETRY_TOL {
                return Err(Error::InvalidKernel(format!(
                    "nonzero diagonal {} at ({i}, {i})",
                    dist[[i, i]]
                )));
            }
            dist[[i, i]] = 0.0;
            for j in (i + 1)..rows {
                let (a, b) = (dist[[i, j]], dist[[j, i]]);
                let scale = a.max(b).max(1.0);
                if (a - b).abs() > KERNEL_SYMMETRY_TOL * scale {
                    return Err(Error::InvalidKernel(format!(
                        "asymmetric entries at ({i}, {j}): {a} vs {b}"
                    )));
                }
                let mean = 0.5 * (a + b);
                dist[[i, j]] = mean;
                dist[[j, i]] = mean;
            }
        }
        Ok(Self { ids, dist })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dist(&self) -> &Array2<f64> {
        &self.dist
    }

    pub fn len(&self) -> usize {
        self.dist.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.dist.nrows() == 0
    }
}

/// Expert constraint: object `i` is closer to `j` than to `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triplet {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl Triplet {
    pub fn new(i: usize, j: usize, k: usize) -> Result<Self> {
        if i == j || i == k || j == k {
            return Err(Error::DegenerateTriplet { i, j, k });
        }
        Ok(Self { i, j, k })
    }

    /// The same triplet with `j` and `k` exchanged.
    pub fn flipped(self) -> Self {
        Self {
            i: self.i,
            j: self.k,
            k: self.j,
        }
    }

    fn max_index(&self) -> usize {
        self.i.max(self.j).max(self.k)
    }
}

/// Ordered list of triplets; duplicates are allowed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripletSet {
    pub triplets: Vec<Triplet>,
}

impl TripletSet {
    pub fn new(triplets: Vec<Triplet>) -> Self {
        Self { triplets }
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Triplet> {
        self.triplets.iter()
    }

    /// Errors if any member index is `>= n`.
    pub fn check_range(&self, n: usize) -> Result<()> {
        match self.triplets.iter().map(Triplet::max_index).max() {
            Some(index) if index >= n => Err(Error::TripletOutOfRange { index, n }),
            _ => Ok(()),
        }
    }

    pub fn extend(&mut self, other: &TripletSet) {
        self.triplets.extend_from_slice(&other.triplets);
    }
}

impl FromIterator<Triplet> for TripletSet {
    fn from_iter<I: IntoIterator<Item = Triplet>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a TripletSet {
    type Item = &'a Triplet;
    type IntoIter = std::slice::Iter<'a, Triplet>;

    fn into_iter(self) -> Self::IntoIter {
        self.triplets.iter()
    }
}

/// N×d output coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub ids: Vec<String>,
    pub coords: Array2<f64>,
}

impl Embedding {
    pub fn new(ids: Vec<String>, coords: Array2<f64>) -> Result<Self> {
        if coords.ncols() == 0 {
            return Err(Error::InvalidInput("embedding needs d >= 1".into()));
        }
        if ids.len() != coords.nrows() {
            return Err(Error::DimensionMismatch {
                expected: coords.nrows(),
                found: ids.len(),
            });
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite coordinate".into()));
        }
        Ok(Self { ids, coords })
    }

    pub fn len(&self) -> usize {
        self.coords.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }
}

/// Label marking an object whose class has not been revealed.
pub const UNREVEALED: i64 = -1;

/// One integer class id per object; [`UNREVEALED`] for hidden labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    pub labels: Vec<i64>,
}

impl LabelVector {
    pub fn new(labels: Vec<i64>) -> Self {
        Self { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of distinct revealed classes.
    pub fn num_classes(&self) -> usize {
        let mut seen: Vec<i64> = self.labels.iter().copied().filter(|&l| l >= 0).collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }
}

/// Mixing weight between the triplet loss and the neighbor loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lambda {
    Fixed(f64),
    /// Balance the two gradient norms at the initial embedding.
    Auto,
}

impl std::str::FromStr for Lambda {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Lambda::Auto);
        }
        let value: f64 = s
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("lambda `{s}` is not a number or `auto`")))?;
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidConfig(format!("lambda {value} outside [0, 1]")));
        }
        Ok(Lambda::Fixed(value))
    }
}

impl std::fmt::Display for Lambda {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Lambda::Fixed(v) => write!(f, "{v}"),
            Lambda::Auto => f.write_str("auto"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedConfig {
    pub lambda: Lambda,
    /// Degrees of freedom of the triplet kernel.
    pub alpha: f64,
    pub perplexity: f64,
    /// Output dimensionality.
    pub dims: usize,
    pub total_iters: usize,
    pub exaggeration_iters: usize,
    pub exaggeration_factor: f64,
    pub learning_rate: f64,
    pub momentum_early: f64,
    pub momentum_late: f64,
    pub seed: u64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            lambda: Lambda::Auto,
            alpha: 1.0,
            perplexity: 30.0,
            dims: 2,
            total_iters: 300,
            exaggeration_iters: 100,
            exaggeration_factor: 4.0,
            learning_rate: 200.0,
            momentum_early: 0.5,
            momentum_late: 0.8,
            seed: 0,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if let Lambda::Fixed(l) = self.lambda {
            if !(0.0..=1.0).contains(&l) {
                return bad(format!("lambda {l} outside [0, 1]"));
            }
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.perplexity > 1.0 && self.perplexity.is_finite()) {
            return bad(format!("perplexity must exceed 1, got {}", self.perplexity));
        }
        if self.dims == 0 {
            return bad("dims must be at least 1".into());
        }
        if self.exaggeration_iters > self.total_iters {
            return bad(format!(
                "exaggeration_iters {} exceeds total_iters {}",
                self.exaggeration_iters, self.total_iters
            ));
        }
        for (name, v) in [
            ("exaggeration_factor", self.exaggeration_factor),
            ("learning_rate", self.learning_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("momentum_early", self.momentum_early),
            ("momentum_late", self.momentum_late),
        ] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        Ok(())
    }
}
