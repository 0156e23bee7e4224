//! Surgery-partitioned cross-validation folds and gallery/probe splits.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{DatasetManifest, ManifestEntry};

#[derive(Debug, Error, PartialEq)]
pub enum FoldError {
    #[error("{found} distinct surgeries cannot fill {k} folds")]
    TooFewSurgeries { found: usize, k: usize },
    #[error("k must be at least 1")]
    ZeroFolds,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub fold_index: usize,
    pub train_surgeries: BTreeSet<String>,
    pub test_surgeries: BTreeSet<String>,
}

/// Deal the lexicographically sorted surgeries round-robin into `k` test
/// sets; each fold trains on the remaining surgeries.
pub fn make_folds(manifest: &DatasetManifest, k: usize) -> Result<Vec<FoldSpec>, FoldError> {
    folds_from_surgeries(manifest.surgeries(), k)
}

pub fn folds_from_surgeries(surgeries: impl IntoIterator<Item = String>, k: usize) -> Result<Vec<FoldSpec>, FoldError> {
    if k == 0 {
        return Err(FoldError::ZeroFolds);
    }
    let all: BTreeSet<String> = surgeries.into_iter().collect();
    if all.len() < k {
        return Err(FoldError::TooFewSurgeries { found: all.len(), k });
    }
    let mut tests = vec![BTreeSet::new(); k];
    for (i, s) in all.iter().enumerate() {
        tests[i % k].insert(s.clone());
    }
    Ok(tests
        .into_iter()
        .enumerate()
        .map(|(fold_index, test_surgeries)| FoldSpec {
            fold_index,
            train_surgeries: all.difference(&test_surgeries).cloned().collect(),
            test_surgeries,
        })
        .collect())
}

/// Indices of gallery and probe entries among `entries`: per identity and
/// surgery, the entry with the smallest sequence_id is the gallery entry;
/// all others are probes. Both lists are in input order.
pub fn gallery_probe_split(entries: &[&ManifestEntry]) -> (Vec<usize>, Vec<usize>) {
    let mut first: BTreeMap<(&str, &str), (&str, usize)> = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        let key = (e.identity_id.as_str(), e.surgery_id.as_str());
        let slot = first.entry(key).or_insert((e.sequence_id.as_str(), i));
        if e.sequence_id.as_str() < slot.0 {
            *slot = (e.sequence_id.as_str(), i);
        }
    }
    let gallery: BTreeSet<usize> = first.values().map(|&(_, i)| i).collect();
    let probes = (0..entries.len()).filter(|i| !gallery.contains(i)).collect();
    (gallery.into_iter().collect(), probes)
}
