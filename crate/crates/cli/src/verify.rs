//! Recompute every derived number of a finished run from its CSV files and
//! compare it with `summary.json`.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::RunError;
use crate::report::{read_csv, summarize_conditions, summarize_saliency, MetricRow, SaliencyStatRow, ShareRow};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub conditions: usize,
    pub metric_rows: usize,
    pub saliency_arms: usize,
}

fn read(path: &Path) -> Result<String, RunError> {
    std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))
}

/// First differing JSON path between `a` and `b`, if any.
pub fn first_difference(a: &Value, b: &Value, path: &str) -> Option<String> {
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            for k in x.keys().chain(y.keys()) {
                let sub = format!("{path}.{k}");
                match (x.get(k), y.get(k)) {
                    (Some(u), Some(v)) => {
                        if let Some(d) = first_difference(u, v, &sub) {
                            return Some(d);
                        }
                    }
                    _ => return Some(sub),
                }
            }
            None
        }
        (Value::Array(x), Value::Array(y)) => {
            if x.len() != y.len() {
                return Some(format!("{path} (length {} vs {})", x.len(), y.len()));
            }
            x.iter()
                .zip(y)
                .enumerate()
                .find_map(|(i, (u, v))| first_difference(u, v, &format!("{path}[{i}]")))
        }
        _ if a == b => None,
        _ => Some(format!("{path}: {a} vs {b}")),
    }
}

fn compare(reported: Option<&Value>, derived: impl Serialize, what: &str) -> Result<(), RunError> {
    let derived = serde_json::to_value(derived).map_err(|e| RunError::Verify(e.to_string()))?;
    let reported = reported.ok_or_else(|| RunError::Verify(format!("summary has no {what}")))?;
    match first_difference(reported, &derived, what) {
        None => Ok(()),
        Some(d) => Err(RunError::Verify(format!("summary disagrees with CSV at {d}"))),
    }
}

pub fn verify_report(out: &Path) -> Result<VerifyReport, RunError> {
    let summary: Value =
        serde_json::from_str(&read(&out.join("summary.json"))?).map_err(|e| RunError::Verify(e.to_string()))?;
    let rows: Vec<MetricRow> = read_csv(&read(&out.join("metrics.csv"))?)?;
    let conditions = summarize_conditions(&rows)?;
    compare(summary.get("conditions"), &conditions, "conditions")?;

    let mut saliency_arms = 0;
    match summary.get("saliency") {
        Some(Value::Null) | None => {}
        Some(s) => {
            let shares: Vec<ShareRow> = read_csv(&read(&out.join("region_shares.csv"))?)?;
            let stats: Vec<SaliencyStatRow> = read_csv(&read(&out.join("saliency_stats.csv"))?)?;
            let arms = summarize_saliency(&shares, &stats);
            saliency_arms = arms.len();
            compare(s.get("arms"), &arms, "saliency.arms")?;
        }
    }
    Ok(VerifyReport {
        conditions: conditions.len(),
        metric_rows: rows.len(),
        saliency_arms,
    })
}
