//! Distance kernels built from machine data.
//!
//! Two constructions: Euclidean distances between feature rows, and an
//! assignment kernel over token lists where the similarity of two lists is
//! the total weight of the best one-to-one matching of their unit-norm token
//! vectors.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{DistanceKernel, FeatureMatrix};

/// Pairwise Euclidean distances between feature rows.
pub fn euclidean_kernel(f: &FeatureMatrix) -> DistanceKernel {
    let n = f.len();
    let x = &f.values;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    x.row(i)
                        .iter()
                        .zip(x.row(j).iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect()
        })
        .collect();
    let dist = Array2::from_shape_vec((n, n), rows.concat()).expect("n×n");
    DistanceKernel::new(f.ids.clone(), dist).expect("euclidean distances form a valid kernel")
}

fn normalize_token(token: &str) -> String {
    token.trim().to_lowercase()
}

/// Token → unit-norm vector lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl TokenEmbeddingTable {
    /// Builds the table, rescaling every vector to unit norm.
    pub fn new(entries: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self> {
        let mut dim = None;
        let mut vectors = HashMap::new();
        for (token, mut v) in entries {
            let key = normalize_token(&token);
            if key.is_empty() {
                return Err(Error::InvalidInput("empty token".into()));
            }
            match dim {
                None => dim = Some(v.len()),
                Some(e) if e != v.len() => {
                    return Err(Error::DimensionMismatch {
                        expected: e,
                        found: v.len(),
                    })
                }
                _ => {}
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "token `{token}` has a zero or non-finite vector"
                )));
            }
            v.iter_mut().for_each(|x| *x /= norm);
            vectors.insert(key, v);
        }
        let dim = dim.unwrap_or(0);
        if dim == 0 {
            return Err(Error::InvalidInput("token table is empty".into()));
        }
        Ok(Self { dim, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Case-folded, whitespace-trimmed exact lookup.
    pub fn get(&self, token: &str) -> Result<&[f64]> {
        self.vectors
            .get(&normalize_token(token))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownToken(token.to_string()))
    }

    /// Inner product of two unit vectors (their cosine).
    pub fn dot(&self, a: &str, b: &str) -> Result<f64> {
        let (x, y) = (self.get(a)?, self.get(b)?);
        Ok(x.iter().zip(y).map(|(p, q)| p * q).sum())
    }
}

/// Loads `token v1 … vE` lines. A leading `count dim` line is skipped.
pub fn load_token_vectors(path: impl AsRef<Path>) -> Result<TokenEmbeddingTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = index + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() || fields[0].starts_with('#') {
            continue;
        }
        if lineno == 1 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            continue;
        }
        let values = fields[1..]
            .iter()
            .map(|f| match f.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::parse(path, lineno, format!("bad vector component `{f}`"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.is_empty() {
            return Err(Error::parse(path, lineno, "token without a vector"));
        }
        entries.push((fields[0].to_string(), values));
    }
    if entries.is_empty() {
        return Err(Error::NoRows { path: path.into() });
    }
    TokenEmbeddingTable::new(entries).map_err(|e| Error::parse(path, 0, e.to_string()))
}

/// Per-object token lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenListCollection {
    pub ids: Vec<String>,
    pub lists: Vec<Vec<String>>,
}

impl TokenListCollection {
    pub fn new(ids: Vec<String>, lists: Vec<Vec<String>>) -> Result<Self> {
        if ids.len() != lists.len() {
            return Err(Error::DimensionMismatch {
                expected: ids.len(),
                found: lists.len(),
            });
        }
        if let Some(pos) = lists.iter().position(Vec::is_empty) {
            return Err(Error::InvalidInput(format!("`{}` has an empty token list", ids[pos])));
        }
        crate::types::IdIndex::new(ids.clone())?;
        Ok(Self { ids, lists })
    }

    /// Errors on the first token the table cannot resolve.
    pub fn check_resolvable(&self, table: &TokenEmbeddingTable) -> Result<()> {
        for token in self.lists.iter().flatten() {
            table.get(token)?;
        }
        Ok(())
    }
}

/// Loads `id,token1;token2;…` rows; a first row starting with `id` is a header.
pub fn load_token_lists(path: impl AsRef<Path>) -> Result<TokenListCollection> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let mut ids = Vec::new();
    let mut lists = Vec::new();
    for (index, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, 0, e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if index == 0 && record.get(0) == Some("id") {
            continue;
        }
        if record.len() != 2 {
            return Err(Error::parse(
                path,
                line,
                format!("expected `id,tokens`, found {} columns", record.len()),
            ));
        }
        let tokens: Vec<String> = record[1]
            .split(';')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect();
        if tokens.is_empty() {
            return Err(Error::parse(path, line, "empty token list"));
        }
        ids.push(record[0].to_string());
        lists.push(tokens);
    }
    if ids.is_empty() {
        return Err(Error::NoRows { path: path.into() });
    }
    TokenListCollection::new(ids, lists).map_err(|e| Error::parse(path, 0, e.to_string()))
}

/// Minimum-cost assignment of every row to a distinct column (`rows ≤ cols`).
///
/// Shortest augmenting path with potentials, O(rows² · cols). Returns the
/// column chosen for each row.
pub fn min_cost_assignment(cost: &Array2<f64>) -> Vec<usize> {
    let (n, m) = cost.dim();
    assert!(n <= m, "min_cost_assignment needs rows <= cols, got {n}x{m}");
    if n == 0 {
        return Vec::new();
    }
    // 1-based with a virtual column 0, following the classic formulation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0usize;
        let mut min_slack = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[col0] = true;
            let r = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0usize;
            for col in 1..=m {
                if used[col] {
                    continue;
                }
                let reduced = cost[[r - 1, col - 1]] - u[r] - v[col];
                if reduced < min_slack[col] {
                    min_slack[col] = reduced;
                    way[col] = col0;
                }
                if min_slack[col] < delta {
                    delta = min_slack[col];
                    col1 = col;
                }
            }
            for col in 0..=m {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    min_slack[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            owner[col0] = owner[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for col in 1..=m {
        if owner[col] > 0 {
            assignment[owner[col] - 1] = col - 1;
        }
    }
    assignment
}

/// Total dot-product weight of the best one-to-one matching that covers the
/// shorter list.
pub fn assignment_similarity(a: &[String], b: &[String], table: &TokenEmbeddingTable) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("token lists must be non-empty".into()));
    }
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut cost = Array2::zeros((short.len(), long.len()));
    for (r, s) in short.iter().enumerate() {
        for (c, l) in long.iter().enumerate() {
            cost[[r, c]] = -table.dot(s, l)?;
        }
    }
    let assignment = min_cost_assignment(&cost);
    Ok(assignment
        .iter()
        .enumerate()
        .map(|(r, &c)| -cost[[r, c]])
        .sum())
}

/// Assignment kernel plus the constant subtracted to make it non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentKernel {
    pub kernel: DistanceKernel,
    /// Minimum off-diagonal raw value; `dist = raw − shift` off the diagonal.
    pub shift: f64,
}

/// Negated assignment similarity, shifted so the closest pair sits at zero.
pub fn assignment_kernel(
    lists: &TokenListCollection,
    table: &TokenEmbeddingTable,
) -> Result<AssignmentKernel> {
    lists.check_resolvable(table)?;
    let n = lists.ids.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let raw: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| assignment_similarity(&lists.lists[i], &lists.lists[j], table).map(|s| -s))
        .collect::<Result<_>>()?;
    let shift = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let shift = if shift.is_finite() { shift } else { 0.0 };
    let mut dist = Array2::zeros((n, n));
    for (&(i, j), &r) in pairs.iter().zip(&raw) {
        let d = (r - shift).max(0.0);
        dist[[i, j]] = d;
        dist[[j, i]] = d;
    }
    Ok(AssignmentKernel {
        kernel: DistanceKernel::new(lists.ids.clone(), dist)?,
        shift,
    })
}
