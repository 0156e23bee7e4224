//! Per-fold metric tables, their statistical summary and the CSV/JSON files
//! that carry them.
//!
//! Everything under `conditions` and `saliency.arms` in `summary.json` is a
//! pure function of `metrics.csv`, `region_shares.csv` and
//! `saliency_stats.csv`; `verify-report` relies on that.

use std::collections::BTreeMap;

use georeid_core::evalkit::{bonferroni_adjust, paired_t_test, rm_anova, significance_marker, StatTestResult};
use georeid_core::saliency::RegionShare;
use serde::{Deserialize, Serialize};

use crate::error::RunError;

pub const METRICS: [&str; 4] = ["map", "cmc3", "acc_micro", "acc_macro"];

/// Part labels pooled as "feet" (shin-and-foot segments) and "head".
pub const FEET_PARTS: [i32; 2] = [9, 10];
pub const HEAD_PARTS: [i32; 1] = [2];

/// One line of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub train_mode: String,
    pub test_mode: String,
    pub arm: String,
    pub fold: usize,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub per_fold: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation across folds.
    pub sd: f64,
    /// Percentages as `"%.2f ± %.2f"` plus a significance suffix.
    pub formatted: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: String,
    pub metrics: BTreeMap<String, MetricSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub a: String,
    pub b: String,
    pub result: StatTestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTests {
    /// Arm with the highest mean; its string carries no suffix.
    pub best: String,
    pub anova: StatTestResult,
    /// Every arm pair, Bonferroni-adjusted over the pairs.
    pub pairwise: Vec<PairTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub train_mode: String,
    pub test_mode: String,
    pub arms: Vec<ArmSummary>,
    /// Empty when only one arm ran.
    pub tests: BTreeMap<String, MetricTests>,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn format_pct(mean: f64, sd: f64) -> String {
    format!("{:.2} ± {:.2}", 100.0 * mean, 100.0 * sd)
}

fn first_seen<'a>(items: impl Iterator<Item = &'a String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in items {
        if !out.contains(s) {
            out.push(s.clone());
        }
    }
    out
}

/// Summarize fold metrics. Conditions and arms keep the order in which they
/// first appear in `rows`; folds are sorted by index.
pub fn summarize_conditions(rows: &[MetricRow]) -> Result<Vec<ConditionSummary>, RunError> {
    let mut conditions: Vec<(String, String)> = Vec::new();
    for r in rows {
        let key = (r.train_mode.clone(), r.test_mode.clone());
        if !conditions.contains(&key) {
            conditions.push(key);
        }
    }
    let mut out = Vec::with_capacity(conditions.len());
    for (train_mode, test_mode) in conditions {
        let cond: Vec<&MetricRow> = rows
            .iter()
            .filter(|r| r.train_mode == train_mode && r.test_mode == test_mode)
            .collect();
        let arms = first_seen(cond.iter().map(|r| &r.arm));
        let mut table: BTreeMap<(&str, &str), BTreeMap<usize, f64>> = BTreeMap::new();
        for r in &cond {
            if !METRICS.contains(&r.metric.as_str()) {
                return Err(RunError::Verify(format!("unknown metric `{}`", r.metric)));
            }
            let prev = table
                .entry((r.arm.as_str(), r.metric.as_str()))
                .or_default()
                .insert(r.fold, r.value);
            if prev.is_some() {
                return Err(RunError::Verify(format!(
                    "duplicate row {train_mode}/{test_mode}/{}/{}/{}",
                    r.arm, r.fold, r.metric
                )));
            }
        }
        let folds = |arm: &str, metric: &str| -> Result<Vec<f64>, RunError> {
            let f = table.get(&(arm, metric)).ok_or_else(|| {
                RunError::Verify(format!("missing {metric} for {arm} in {train_mode}->{test_mode}"))
            })?;
            Ok(f.values().copied().collect())
        };

        let mut tests = BTreeMap::new();
        let mut suffix: BTreeMap<(String, &str), &'static str> = BTreeMap::new();
        if arms.len() >= 2 {
            for metric in METRICS {
                let values = arms
                    .iter()
                    .map(|a| folds(a, metric))
                    .collect::<Result<Vec<_>, _>>()?;
                let anova = rm_anova(&values)?;
                let means: Vec<f64> = values.iter().map(|v| mean_sd(v).0).collect();
                let best = (0..arms.len()).fold(0, |b, i| if means[i] > means[b] { i } else { b });
                let mut pairwise = Vec::new();
                for i in 0..arms.len() {
                    for j in i + 1..arms.len() {
                        pairwise.push(PairTest {
                            a: arms[i].clone(),
                            b: arms[j].clone(),
                            result: paired_t_test(&values[i], &values[j])?,
                        });
                    }
                }
                let adjusted = bonferroni_adjust(&pairwise.iter().map(|p| p.result.p_value).collect::<Vec<_>>())?;
                for (p, adj) in pairwise.iter_mut().zip(adjusted) {
                    p.result.adjusted_p = Some(adj);
                    let other = if p.a == arms[best] {
                        Some(&p.b)
                    } else if p.b == arms[best] {
                        Some(&p.a)
                    } else {
                        None
                    };
                    if let Some(o) = other {
                        suffix.insert((o.clone(), metric), significance_marker(adj));
                    }
                }
                tests.insert(
                    metric.to_string(),
                    MetricTests {
                        best: arms[best].clone(),
                        anova,
                        pairwise,
                    },
                );
            }
        }

        let mut arm_summaries = Vec::with_capacity(arms.len());
        for arm in &arms {
            let mut metrics = BTreeMap::new();
            for metric in METRICS {
                let per_fold = folds(arm, metric)?;
                let (mean, sd) = mean_sd(&per_fold);
                let mark = suffix.get(&(arm.clone(), metric)).copied().unwrap_or("");
                metrics.insert(
                    metric.to_string(),
                    MetricSummary {
                        per_fold,
                        mean,
                        sd,
                        formatted: format!("{}{mark}", format_pct(mean, sd)),
                    },
                );
            }
            arm_summaries.push(ArmSummary {
                arm: arm.clone(),
                metrics,
            });
        }
        out.push(ConditionSummary {
            train_mode,
            test_mode,
            arms: arm_summaries,
            tests,
        });
    }
    Ok(out)
}

/// One line of `region_shares.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareRow {
    pub arm: String,
    pub part: i32,
    pub part_name: String,
    pub saliency_share: f64,
    pub area_share: f64,
}

/// One line of `saliency_stats.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyStatRow {
    pub arm: String,
    pub statistic: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSaliency {
    pub arm: String,
    /// Mean over attributed sequences, keyed by part name.
    pub parts: BTreeMap<String, RegionShare>,
    pub feet: RegionShare,
    pub head: RegionShare,
    pub feet_head: RegionShare,
    /// `feet_head.saliency_share / feet_head.area_share`.
    pub feet_head_ratio: f64,
    pub stats: BTreeMap<String, f64>,
}

fn pooled(rows: &[&ShareRow], labels: &[i32]) -> RegionShare {
    let mut s = RegionShare {
        saliency_share: 0.0,
        area_share: 0.0,
    };
    for r in rows.iter().filter(|r| labels.contains(&r.part)) {
        s.saliency_share += r.saliency_share;
        s.area_share += r.area_share;
    }
    s
}

/// Per-arm saliency results in the order arms first appear in `shares`.
pub fn summarize_saliency(shares: &[ShareRow], stats: &[SaliencyStatRow]) -> Vec<ArmSaliency> {
    first_seen(shares.iter().map(|r| &r.arm))
        .into_iter()
        .map(|arm| {
            let rows: Vec<&ShareRow> = shares.iter().filter(|r| r.arm == arm).collect();
            let feet_head = pooled(&rows, &[FEET_PARTS.as_slice(), HEAD_PARTS.as_slice()].concat());
            ArmSaliency {
                parts: rows
                    .iter()
                    .map(|r| {
                        (
                            r.part_name.clone(),
                            RegionShare {
                                saliency_share: r.saliency_share,
                                area_share: r.area_share,
                            },
                        )
                    })
                    .collect(),
                feet: pooled(&rows, &FEET_PARTS),
                head: pooled(&rows, &HEAD_PARTS),
                feet_head_ratio: feet_head.saliency_share / feet_head.area_share,
                feet_head,
                stats: stats
                    .iter()
                    .filter(|s| s.arm == arm)
                    .map(|s| (s.statistic.clone(), s.value))
                    .collect(),
                arm,
            }
        })
        .collect()
}

/// Serialize rows with a header; floats use the shortest representation that
/// parses back to the same value.
pub fn write_csv<T: Serialize>(rows: &[T]) -> Result<String, RunError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| RunError::Verify(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| RunError::Verify(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| RunError::Verify(e.to_string()))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, RunError> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| RunError::Verify(format!("CSV: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(arm: &str, accs: &[f64]) -> Vec<MetricRow> {
        let mut out = Vec::new();
        for (fold, &a) in accs.iter().enumerate() {
            for metric in METRICS {
                out.push(MetricRow {
                    train_mode: "m".into(),
                    test_mode: "m".into(),
                    arm: arm.into(),
                    fold,
                    metric: metric.into(),
                    value: a,
                });
            }
        }
        out
    }

    #[test]
    fn formatting_and_markers() {
        let mut r = rows("geometric", &[0.5, 0.6, 0.55, 0.65]);
        r.extend(rows("appearance", &[0.1, 0.12, 0.15, 0.11]));
        let s = summarize_conditions(&r).unwrap();
        let acc = &s[0].arms[0].metrics["acc_micro"];
        assert_eq!(acc.formatted, "57.50 ± 6.45");
        assert!(s[0].arms[1].metrics["acc_micro"].formatted.ends_with('*'));
        assert_eq!(s[0].tests["acc_micro"].best, "geometric");
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let r = rows("geometric", &[0.1 + 0.2, 1.0 / 3.0]);
        let back: Vec<MetricRow> = read_csv(&write_csv(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
