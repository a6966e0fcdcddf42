//! Generating, splitting and scoring triplet sets.

use std::collections::{BTreeMap, HashSet};

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::{LabelVector, Triplet, TripletSet};

/// Per-anchor layout of the ordered triplets `ℓ_i = ℓ_j ≠ ℓ_k` among the
/// first `n` objects.
struct LabelTriplets {
    /// members of each class, ascending
    members: BTreeMap<i64, Vec<usize>>,
    /// objects of every other class, ascending
    others: BTreeMap<i64, Vec<usize>>,
    labels: Vec<i64>,
    /// prefix[i] = number of triplets anchored before i
    prefix: Vec<usize>,
}

impl LabelTriplets {
    fn new(labels: &[i64]) -> Self {
        let n = labels.len();
        let mut members: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for (i, &l) in labels.iter().enumerate() {
            members.entry(l).or_default().push(i);
        }
        let others = members
            .keys()
            .map(|&l| (l, (0..n).filter(|&i| labels[i] != l).collect()))
            .collect();
        let mut prefix = Vec::with_capacity(n + 1);
        prefix.push(0);
        for &l in labels {
            let c = members[&l].len();
            prefix.push(prefix.last().unwrap() + (c - 1) * (n - c));
        }
        Self {
            members,
            others,
            labels: labels.to_vec(),
            prefix,
        }
    }

    fn total(&self) -> usize {
        *self.prefix.last().unwrap()
    }

    fn decode(&self, index: usize) -> Triplet {
        let i = self.prefix.partition_point(|&p| p <= index) - 1;
        let l = self.labels[i];
        let same = &self.members[&l];
        let other = &self.others[&l];
        let r = index - self.prefix[i];
        let (j_slot, k_slot) = (r / other.len(), r % other.len());
        let self_pos = same.binary_search(&i).expect("anchor is a member");
        let j = if j_slot < self_pos {
            same[j_slot]
        } else {
            same[j_slot + 1]
        };
        Triplet { i, j, k: other[k_slot] }
    }
}

/// All ordered triplets `(i, j, k)` with `i, j, k < n` and `ℓ_i = ℓ_j ≠ ℓ_k`.
///
/// With `cap`, a uniform subsample of that many triplets is drawn without
/// replacement (kept in enumeration order).
pub fn sample_from_labels(
    labels: &LabelVector,
    n: usize,
    cap: Option<usize>,
    seed: u64,
) -> Result<TripletSet> {
    if n > labels.len() {
        return Err(Error::InvalidInput(format!(
            "n = {n} exceeds the {} labeled objects",
            labels.len()
        )));
    }
    let revealed = &labels.labels[..n];
    if let Some(pos) = revealed.iter().position(|&l| l < 0) {
        return Err(Error::Unlabeled(pos));
    }
    let layout = LabelTriplets::new(revealed);
    let total = layout.total();
    let picks: Box<dyn Iterator<Item = usize>> = match cap {
        Some(cap) if cap < total => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut chosen = rand::seq::index::sample(&mut rng, total, cap).into_vec();
            chosen.sort_unstable();
            Box::new(chosen.into_iter())
        }
        _ => Box::new(0..total),
    };
    Ok(picks.map(|index| layout.decode(index)).collect())
}

/// Closed-form size of the full label triplet set for the first `n` labels.
pub fn label_triplet_count(labels: &[i64]) -> usize {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let n = labels.len();
    counts.values().map(|&c| c * (c - 1) * (n - c)).sum()
}

fn dedup(xs: &[usize]) -> Vec<usize> {
    let mut seen = HashSet::new();
    xs.iter().copied().filter(|x| seen.insert(*x)).collect()
}

/// Expands one selection screen: the reference, the shown group `G` and the
/// members `S ⊆ G` judged similar to it yield `(ref, j, k)` for every
/// `j ∈ S` and `k ∈ G ∖ S`.
pub fn expand_selection(reference: usize, selected: &[usize], shown: &[usize]) -> Result<TripletSet> {
    let shown = dedup(shown);
    let selected = dedup(selected);
    if shown.contains(&reference) {
        return Err(Error::InvalidInput(format!(
            "reference {reference} is part of the shown group"
        )));
    }
    let shown_set: HashSet<usize> = shown.iter().copied().collect();
    if let Some(s) = selected.iter().find(|s| !shown_set.contains(s)) {
        return Err(Error::InvalidInput(format!(
            "selected object {s} was not shown"
        )));
    }
    let selected_set: HashSet<usize> = selected.iter().copied().collect();
    let rest: Vec<usize> = shown
        .iter()
        .copied()
        .filter(|g| !selected_set.contains(g))
        .collect();
    Ok(selected
        .iter()
        .flat_map(|&j| {
            rest.iter().map(move |&k| Triplet {
                i: reference,
                j,
                k,
            })
        })
        .collect())
}

/// Random partition by position into `(train, test)`; the test part has
/// `round(M · test_fraction)` triplets. Both parts keep input order.
pub fn split(t: &TripletSet, test_fraction: f64, seed: u64) -> Result<(TripletSet, TripletSet)> {
    if t.is_empty() {
        return Err(Error::EmptyTriplets);
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let m = t.len();
    let test_len = ((m as f64) * test_fraction).round() as usize;
    let mut positions: Vec<usize> = (0..m).collect();
    positions.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_test = vec![false; m];
    for &p in &positions[..test_len] {
        in_test[p] = true;
    }
    let (mut train, mut test) = (Vec::with_capacity(m - test_len), Vec::with_capacity(test_len));
    for (tr, flag) in t.iter().zip(in_test) {
        if flag {
            test.push(*tr);
        } else {
            train.push(*tr);
        }
    }
    Ok((TripletSet::new(train), TripletSet::new(test)))
}

/// Fraction of triplets with `‖y_i − y_j‖² ≥ ‖y_i − y_k‖²`; ties are violations.
pub fn violation_fraction(y: ArrayView2<f64>, t: &TripletSet) -> Result<f64> {
    if t.is_empty() {
        return Err(Error::EmptyTriplets);
    }
    t.check_range(y.nrows())?;
    let sq = |a: usize, b: usize| -> f64 {
        y.row(a)
            .iter()
            .zip(y.row(b).iter())
            .map(|(p, q)| (p - q) * (p - q))
            .sum()
    };
    let violated = t.iter().filter(|tr| sq(tr.i, tr.j) >= sq(tr.i, tr.k)).count();
    Ok(violated as f64 / t.len() as f64)
}
