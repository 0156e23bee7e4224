//! Probe-gallery ranking metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("ranked list contains no positive for the probe")]
    NoPositive,
    #[error("probe {probe} has identity {identity:?}, which is not in the gallery")]
    UnknownProbeIdentity { probe: usize, identity: String },
    #[error("empty probe or gallery set")]
    Empty,
    #[error("embedding widths differ")]
    DimensionMismatch,
}

/// Mean over positive positions `r` (1-based) of `positives_up_to(r) / r`.
pub fn average_precision<L: PartialEq>(ranked: &[L], probe: &L) -> Result<f64, MetricsError> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, l) in ranked.iter().enumerate() {
        if l == probe {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    if hits == 0 {
        return Err(MetricsError::NoPositive);
    }
    Ok(sum / hits as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub map: f64,
    pub cmc3: f64,
    pub acc_micro: f64,
    pub acc_macro: f64,
    /// 1-based rank of the first correct gallery match of each probe.
    pub per_probe_ranks: Vec<usize>,
    pub per_identity_acc: BTreeMap<String, f64>,
}

/// Gallery indices sorted by ascending squared Euclidean distance to `probe`,
/// ties broken by gallery index.
pub fn rank_gallery(probe: &[f64], gallery: &[Vec<f64>]) -> Vec<usize> {
    let d: Vec<f64> = gallery
        .iter()
        .map(|g| g.iter().zip(probe).map(|(a, b)| (a - b) * (a - b)).sum())
        .collect();
    let mut order: Vec<usize> = (0..gallery.len()).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    order
}

/// Rank every probe against the gallery and summarize.
///
/// `acc_macro` is the unweighted mean, over probe identities, of each
/// identity's rank-1 accuracy.
pub fn evaluate_probe_gallery(
    probes: &[Vec<f64>],
    probe_labels: &[String],
    gallery: &[Vec<f64>],
    gallery_labels: &[String],
) -> Result<MetricsReport, MetricsError> {
    if probes.is_empty() || gallery.is_empty() {
        return Err(MetricsError::Empty);
    }
    let dim = gallery[0].len();
    if probes.iter().chain(gallery).any(|v| v.len() != dim) {
        return Err(MetricsError::DimensionMismatch);
    }
    for (i, l) in probe_labels.iter().enumerate() {
        if !gallery_labels.contains(l) {
            return Err(MetricsError::UnknownProbeIdentity {
                probe: i,
                identity: l.clone(),
            });
        }
    }
    let mut ap_sum = 0.0;
    let mut ranks = Vec::with_capacity(probes.len());
    let mut per_id: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (p, label) in probes.iter().zip(probe_labels) {
        let order = rank_gallery(p, gallery);
        let ranked: Vec<&String> = order.iter().map(|&g| &gallery_labels[g]).collect();
        ap_sum += average_precision(&ranked, &label)?;
        let first = ranked.iter().position(|l| *l == label).expect("identity present") + 1;
        ranks.push(first);
        let e = per_id.entry(label.clone()).or_default();
        e.0 += usize::from(first == 1);
        e.1 += 1;
    }
    let n = probes.len() as f64;
    let per_identity_acc: BTreeMap<String, f64> = per_id
        .into_iter()
        .map(|(k, (hit, tot))| (k, hit as f64 / tot as f64))
        .collect();
    Ok(MetricsReport {
        map: ap_sum / n,
        cmc3: ranks.iter().filter(|&&r| r <= 3).count() as f64 / n,
        acc_micro: ranks.iter().filter(|&&r| r == 1).count() as f64 / n,
        acc_macro: per_identity_acc.values().sum::<f64>() / per_identity_acc.len() as f64,
        per_probe_ranks: ranks,
        per_identity_acc,
    })
}
