//! Paired t-test, one-way repeated-measures ANOVA and Bonferroni correction.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use thiserror::Error;

pub const ALPHA: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("samples have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 paired observations, got {0}")]
    TooFewObservations(usize),
    #[error("need at least 2 methods, got {0}")]
    TooFewMethods(usize),
    #[error("table is incomplete: row {row} has {got} cells, expected {expected}")]
    IncompleteTable { row: usize, got: usize, expected: usize },
    #[error("value {0} is not a finite number")]
    NonFinite(f64),
    #[error("p-value {0} is outside [0, 1]")]
    BadP(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Df {
    One(f64),
    Two(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatFlag {
    /// Every paired difference (or every residual) is identical, so the
    /// statistic has no variance estimate; p is reported as 1 when the
    /// effect is exactly zero and 0 otherwise.
    ZeroVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatTestResult {
    /// Infinite when the variance estimate is zero but the effect is not;
    /// serialized as `null` in that case.
    pub statistic: f64,
    pub df: Df,
    pub p_value: f64,
    pub adjusted_p: Option<f64>,
    pub flag: Option<StatFlag>,
}

/// Two-sided tail probability of Student's t with `df` degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(0.5 * df, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Upper tail probability of the F distribution.
pub fn f_upper_p(f: f64, d1: f64, d2: f64) -> f64 {
    if f.is_infinite() {
        return 0.0;
    }
    if f <= 0.0 {
        return 1.0;
    }
    beta_reg(0.5 * d2, 0.5 * d1, d2 / (d2 + d1 * f)).clamp(0.0, 1.0)
}

fn check_finite(v: &[f64]) -> Result<(), StatsError> {
    match v.iter().find(|x| !x.is_finite()) {
        Some(&x) => Err(StatsError::NonFinite(x)),
        None => Ok(()),
    }
}

/// Paired two-sided t-test on `a - b` with the sample (n-1) standard
/// deviation.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<StatTestResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(StatsError::TooFewObservations(n));
    }
    check_finite(a)?;
    check_finite(b)?;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let df = (n - 1) as f64;
    if d.iter().all(|&v| v == d[0]) {
        let zero = d[0] == 0.0;
        return Ok(StatTestResult {
            statistic: if zero { 0.0 } else { f64::INFINITY.copysign(d[0]) },
            df: Df::One(df),
            p_value: if zero { 1.0 } else { 0.0 },
            adjusted_p: None,
            flag: Some(StatFlag::ZeroVariance),
        });
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / df;
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    Ok(StatTestResult {
        statistic: t,
        df: Df::One(df),
        p_value: t_two_sided_p(t, df),
        adjusted_p: None,
        flag: None,
    })
}

/// One-way repeated-measures ANOVA: rows are methods (conditions), columns
/// are folds (subjects).
pub fn rm_anova(values: &[Vec<f64>]) -> Result<StatTestResult, StatsError> {
    let m = values.len();
    if m < 2 {
        return Err(StatsError::TooFewMethods(m));
    }
    let n = values[0].len();
    for (row, v) in values.iter().enumerate() {
        if v.len() != n {
            return Err(StatsError::IncompleteTable {
                row,
                got: v.len(),
                expected: n,
            });
        }
        check_finite(v)?;
    }
    if n < 2 {
        return Err(StatsError::TooFewObservations(n));
    }
    let (mf, nf) = (m as f64, n as f64);
    let grand = values.iter().flatten().sum::<f64>() / (mf * nf);
    let ss_total: f64 = values.iter().flatten().map(|v| (v - grand).powi(2)).sum();
    let ss_cond: f64 = values
        .iter()
        .map(|row| (row.iter().sum::<f64>() / nf - grand).powi(2))
        .sum::<f64>()
        * nf;
    let ss_subj: f64 = (0..n)
        .map(|j| (values.iter().map(|row| row[j]).sum::<f64>() / mf - grand).powi(2))
        .sum::<f64>()
        * mf;
    let ss_error = (ss_total - ss_cond - ss_subj).max(0.0);
    let (d1, d2) = (mf - 1.0, (mf - 1.0) * (nf - 1.0));
    let df = Df::Two(d1, d2);
    if ss_error <= 1e-24 * ss_total.max(f64::MIN_POSITIVE) || ss_total == 0.0 {
        let zero = ss_cond <= 1e-24 * ss_total.max(f64::MIN_POSITIVE) || ss_total == 0.0;
        return Ok(StatTestResult {
            statistic: if zero { 0.0 } else { f64::INFINITY },
            df,
            p_value: if zero { 1.0 } else { 0.0 },
            adjusted_p: None,
            flag: Some(StatFlag::ZeroVariance),
        });
    }
    let f = (ss_cond / d1) / (ss_error / d2);
    Ok(StatTestResult {
        statistic: f,
        df,
        p_value: f_upper_p(f, d1, d2),
        adjusted_p: None,
        flag: None,
    })
}

/// `min(1, p * m)` for a family of `m` tests.
pub fn bonferroni_adjust(p_values: &[f64]) -> Result<Vec<f64>, StatsError> {
    if let Some(&p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(StatsError::BadP(p));
    }
    let m = p_values.len() as f64;
    Ok(p_values.iter().map(|p| (p * m).min(1.0)).collect())
}

/// `"*"` when `p < 0.05`, otherwise `"ns"`.
pub fn significance_marker(p: f64) -> &'static str {
    if p < ALPHA {
        "*"
    } else {
        "ns"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_of_one_to_four() {
        let r = paired_t_test(&[1.0, 2.0, 3.0, 4.0], &[0.0; 4]).unwrap();
        assert!((r.statistic - 3.872_983_346_207_417).abs() < 1e-12);
        assert_eq!(r.df, Df::One(3.0));
    }

    #[test]
    fn identical_samples_are_flagged() {
        let r = paired_t_test(&[0.3, 0.5], &[0.3, 0.5]).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        assert_eq!(r.flag, Some(StatFlag::ZeroVariance));
        let r = paired_t_test(&[1.5, 2.5], &[0.5, 1.5]).unwrap();
        assert_eq!(r.p_value, 0.0);
    }

    #[test]
    fn constant_table_has_zero_f() {
        let r = rm_anova(&[vec![2.0; 3], vec![2.0; 3]]).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
    }

    #[test]
    fn bonferroni_caps_at_one() {
        assert_eq!(bonferroni_adjust(&[0.01]).unwrap(), vec![0.01]);
        assert_eq!(bonferroni_adjust(&[0.01, 0.02, 0.5]).unwrap(), vec![0.03, 0.06, 1.0]);
        assert_eq!(bonferroni_adjust(&[0.5; 4]).unwrap(), vec![1.0; 4]);
        assert_eq!(bonferroni_adjust(&[1.5]), Err(StatsError::BadP(1.5)));
    }

    #[test]
    fn markers() {
        assert_eq!(significance_marker(0.049), "*");
        assert_eq!(significance_marker(0.05), "ns");
    }
}
