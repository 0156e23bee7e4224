//! Probe-gallery evaluation, cross-validation folds and method comparison
//! statistics.

pub mod folds;
pub mod metrics;
pub mod stats;

pub use folds::{folds_from_surgeries, gallery_probe_split, make_folds, FoldError, FoldSpec};
pub use metrics::{average_precision, evaluate_probe_gallery, rank_gallery, MetricsError, MetricsReport};
pub use stats::{
    bonferroni_adjust, paired_t_test, rm_anova, significance_marker, Df, StatFlag, StatTestResult, StatsError,
};
