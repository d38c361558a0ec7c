use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Longitude-blocked partition into `k` folds.
///
/// Fold `i` covers the half-open longitude interval
/// `(boundaries[i-1], boundaries[i]]`, with the outermost folds unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub boundaries: Vec<f64>,
    pub fold_of: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold(&self, example_id: &str) -> Option<usize> {
        self.fold_of.get(example_id).copied()
    }

    pub fn members(&self, fold: usize) -> Vec<&str> {
        self.fold_of
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.fold_of.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// `(exclusive lower, inclusive upper)` longitude bounds of a fold.
    pub fn interval(&self, fold: usize) -> (Option<f64>, Option<f64>) {
        let lower = fold.checked_sub(1).map(|i| self.boundaries[i]);
        let upper = self.boundaries.get(fold).copied();
        (lower, upper)
    }

    pub fn interval_contains(&self, fold: usize, longitude: f64) -> bool {
        let (lo, hi) = self.interval(fold);
        lo.is_none_or(|lo| longitude > lo) && hi.is_none_or(|hi| longitude <= hi)
    }

    /// True when some fold received no examples because of tied longitudes.
    pub fn is_degenerate(&self) -> bool {
        self.sizes().contains(&0)
    }
}

/// Splits `(example_id, longitude)` pairs into `k` contiguous longitude
/// intervals of (near) equal count.
///
/// Boundaries sit at longitude quantiles of the sorted examples. Examples
/// tied with a boundary all go to the lower-index fold, so with distinct
/// longitudes fold sizes differ by at most one.
pub fn assign_folds<'a>(examples: impl IntoIterator<Item = (&'a str, f64)>, k: usize) -> Result<FoldAssignment> {
    let mut items: Vec<(&str, f64)> = examples.into_iter().collect();
    let n = items.len();
    if k == 0 {
        return Err(Error::Usage("fold count must be positive".into()));
    }
    if k > n {
        return Err(Error::Usage(format!("cannot split {n} examples into {k} folds")));
    }
    let mut seen = HashSet::with_capacity(n);
    for &(id, lon) in &items {
        if !lon.is_finite() {
            return Err(Error::Usage(format!("example {id} has non-finite longitude")));
        }
        if !seen.insert(id) {
            return Err(Error::Usage(format!("duplicate example id {id}")));
        }
    }
    items.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));

    let boundaries: Vec<f64> = (1..k).map(|i| items[i * n / k - 1].1).collect();
    let fold_of = items
        .iter()
        .map(|&(id, lon)| (id.to_string(), boundaries.partition_point(|&b| b < lon)))
        .collect();
    let folds = FoldAssignment { k, boundaries, fold_of };
    if folds.is_degenerate() {
        log::warn!(
            "longitude ties left empty folds: sizes {:?} for k = {k}",
            folds.sizes()
        );
    }
    Ok(folds)
}
