//! Run errors and their structured, machine-readable rendering.

use std::path::Path;

use georeid_core::embed::{DescriptorError, IoError, ModelError, TrainError};
use georeid_core::evalkit::{FoldError, MetricsError, StatsError};
use georeid_core::geom::ManifestError;
use georeid_core::render::RenderError;
use georeid_core::saliency::SaliencyError;
use georeid_core::synthor::SynthError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("sequence {sequence}: {source}")]
    Render { sequence: String, source: RenderError },
    #[error("sequence {sequence}: {source}")]
    Descriptor { sequence: String, source: DescriptorError },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] IoError),
    #[error(transparent)]
    Fold(#[from] FoldError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Saliency(#[from] SaliencyError),
    #[error("report mismatch: {0}")]
    Verify(String),
}

impl RunError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        RunError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    /// Stable error class for machine consumers; module errors name their
    /// variant (e.g. `TooFewSurgeries`).
    pub fn kind(&self) -> String {
        fn variant(d: &impl std::fmt::Debug) -> String {
            let s = format!("{d:?}");
            s.split(|c: char| !c.is_alphanumeric() && c != '_')
                .next()
                .unwrap_or_default()
                .to_string()
        }
        match self {
            RunError::Config(_) => "Config".into(),
            RunError::Io { .. } => "Io".into(),
            RunError::Manifest(e) => variant(e),
            RunError::Synth(e) => variant(e),
            RunError::Render { source, .. } => variant(source),
            RunError::Descriptor { source, .. } => variant(source),
            RunError::Train(e) => variant(e),
            RunError::Model(e) => variant(e),
            RunError::Checkpoint(e) => variant(e),
            RunError::Fold(e) => variant(e),
            RunError::Metrics(e) => variant(e),
            RunError::Stats(e) => variant(e),
            RunError::Saliency(e) => variant(e),
            RunError::Verify(_) => "ReportMismatch".into(),
        }
    }

    pub fn module(&self) -> &'static str {
        match self {
            RunError::Config(_) | RunError::Io { .. } | RunError::Verify(_) => "cli",
            RunError::Manifest(_) => "geom-core",
            RunError::Synth(_) => "synthor",
            RunError::Render { .. } => "render",
            RunError::Descriptor { .. }
            | RunError::Train(_)
            | RunError::Model(_)
            | RunError::Checkpoint(_) => "embed",
            RunError::Fold(_) | RunError::Metrics(_) | RunError::Stats(_) => "evalkit",
            RunError::Saliency(_) => "saliency",
        }
    }
}

/// A run error tagged with the stage it interrupted.
#[derive(Debug, Error)]
#[error("stage {stage}: {error}")]
pub struct StageError {
    pub stage: String,
    pub error: RunError,
}

impl StageError {
    pub fn new(stage: impl Into<String>, error: impl Into<RunError>) -> Self {
        Self {
            stage: stage.into(),
            error: error.into(),
        }
    }

    /// One-line JSON object written to stderr on failure.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Wire<'a> {
            error: String,
            module: &'a str,
            stage: &'a str,
            message: String,
        }
        serde_json::to_string(&Wire {
            error: self.error.kind(),
            module: self.error.module(),
            stage: &self.stage,
            message: self.error.to_string(),
        })
        .expect("error serializes")
    }
}

pub trait StageContext<T> {
    fn stage(self, stage: &str) -> Result<T, StageError>;
}

impl<T, E: Into<RunError>> StageContext<T> for Result<T, E> {
    fn stage(self, stage: &str) -> Result<T, StageError> {
        self.map_err(|e| StageError::new(stage, e))
    }
}
