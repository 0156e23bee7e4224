//! Dataset sources and the per-sequence descriptor pass.

use std::path::{Path, PathBuf};

use georeid_core::embed::{appearance_descriptor_with, geometric_descriptor, Binning};
use georeid_core::geom::{load_manifest, load_sequence, DatasetManifest, ManifestEntry, PersonSequence};
use georeid_core::render::{render_sequence, ProjectedImages};
use georeid_core::synthor::{generate_planned, plan_dataset, DatasetSpec, GenMode, PlannedSequence};
use rayon::prelude::*;

use crate::config::{Arm, DatasetSource, ExperimentConfig};
use crate::error::RunError;

#[derive(Debug, Clone)]
enum Source {
    Synthetic {
        planned: PlannedSequence,
        spec: DatasetSpec,
        mode: GenMode,
        seed: u64,
    },
    File {
        base_dir: PathBuf,
    },
}

/// A sequence that can be materialized on demand, so point clouds never
/// have to be held for a whole dataset at once.
#[derive(Debug, Clone)]
pub struct SequenceRecord {
    pub entry: ManifestEntry,
    source: Source,
}

impl SequenceRecord {
    pub fn load(&self) -> Result<PersonSequence, RunError> {
        match &self.source {
            Source::Synthetic {
                planned,
                spec,
                mode,
                seed,
            } => Ok(generate_planned(planned, spec, *mode, *seed)?),
            Source::File { base_dir } => Ok(load_sequence(&self.entry, base_dir)?),
        }
    }

    pub fn render(&self, resolution: (usize, usize)) -> Result<Vec<ProjectedImages>, RunError> {
        let seq = self.load()?;
        render_sequence(&seq, resolution).map_err(|source| RunError::Render {
            sequence: self.entry.sequence_id.clone(),
            source,
        })
    }
}

/// All sequences recorded under one appearance mode.
#[derive(Debug, Clone)]
pub struct ModeSet {
    pub mode: String,
    pub manifest: DatasetManifest,
    pub records: Vec<SequenceRecord>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    /// In configuration order.
    pub modes: Vec<ModeSet>,
}

impl Dataset {
    /// Build the dataset named by `cfg`; `base_dir` anchors relative paths.
    pub fn from_config(cfg: &ExperimentConfig, base_dir: &Path) -> Result<Self, RunError> {
        match &cfg.dataset {
            DatasetSource::Synthetic(s) => {
                let spec = s.spec();
                let mut modes = Vec::new();
                for &tag in &s.modes {
                    let mode = GenMode {
                        tag,
                        noise_sd_m: s.noise_sd_m,
                    };
                    let plan = plan_dataset(&spec, tag, cfg.seed)?;
                    let manifest =
                        DatasetManifest::new(tag.as_str(), plan.iter().map(|p| p.entry.clone()).collect());
                    let records = plan
                        .into_iter()
                        .map(|planned| SequenceRecord {
                            entry: planned.entry.clone(),
                            source: Source::Synthetic {
                                planned,
                                spec,
                                mode,
                                seed: cfg.seed,
                            },
                        })
                        .collect();
                    modes.push(ModeSet {
                        mode: tag.as_str().into(),
                        manifest,
                        records,
                    });
                }
                Ok(Self { modes })
            }
            DatasetSource::Manifest(m) => {
                let path = if m.path.is_absolute() {
                    m.path.clone()
                } else {
                    base_dir.join(&m.path)
                };
                let text = std::fs::read_to_string(&path).map_err(|e| RunError::io(&path, e))?;
                let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
                let manifest = load_manifest(&text, &dir)?;
                let records = manifest
                    .entries
                    .iter()
                    .map(|entry| SequenceRecord {
                        entry: entry.clone(),
                        source: Source::File { base_dir: dir.clone() },
                    })
                    .collect();
                Ok(Self {
                    modes: vec![ModeSet {
                        mode: manifest.mode_tag.clone(),
                        manifest,
                        records,
                    }],
                })
            }
        }
    }

    pub fn mode(&self, name: &str) -> Result<&ModeSet, RunError> {
        self.modes
            .iter()
            .find(|m| m.mode == name)
            .ok_or_else(|| RunError::Config(format!("dataset has no mode `{name}`")))
    }
}

/// Descriptors of one sequence. Arms that were not requested stay `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceFeatures {
    pub geometric: Option<Vec<f64>>,
    pub appearance: Option<Vec<f64>>,
    /// Soft-binned appearance descriptor, used by the saliency probe.
    pub soft_appearance: Option<Vec<f64>>,
}

impl SequenceFeatures {
    pub fn get(&self, arm: Arm) -> Option<&Vec<f64>> {
        match arm {
            Arm::Geometric => self.geometric.as_ref(),
            Arm::Appearance => self.appearance.as_ref(),
        }
    }
}

/// What the descriptor pass computes for every sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureRequest<'a> {
    pub arms: &'a [Arm],
    pub soft_tau: Option<f64>,
    pub resolution: (usize, usize),
}

pub fn sequence_features(
    record: &SequenceRecord,
    images: &[ProjectedImages],
    req: FeatureRequest<'_>,
) -> Result<SequenceFeatures, RunError> {
    let wrap = |source| RunError::Descriptor {
        sequence: record.entry.sequence_id.clone(),
        source,
    };
    let geometric = if req.arms.contains(&Arm::Geometric) {
        Some(geometric_descriptor(images, record.entry.fps).map_err(wrap)?.values)
    } else {
        None
    };
    let appearance = if req.arms.contains(&Arm::Appearance) {
        Some(appearance_descriptor_with(images, Binning::Hard).map_err(wrap)?.values)
    } else {
        None
    };
    let soft_appearance = match req.soft_tau {
        Some(tau) if req.arms.contains(&Arm::Appearance) => Some(
            appearance_descriptor_with(images, Binning::Soft { tau })
                .map_err(wrap)?
                .values,
        ),
        _ => None,
    };
    Ok(SequenceFeatures {
        geometric,
        appearance,
        soft_appearance,
    })
}

/// Run `f` over `items` on the current rayon pool, keeping input order and
/// reporting the first failure in input order.
pub fn ordered_try_map<T: Sync, U: Send>(
    items: &[T],
    f: impl Fn(&T) -> Result<U, RunError> + Sync + Send,
) -> Result<Vec<U>, RunError> {
    let results: Vec<Result<U, RunError>> = items.par_iter().map(f).collect();
    results.into_iter().collect()
}

/// Generate or load, render and describe every sequence of `set`; images
/// are dropped as soon as their descriptors exist.
pub fn extract_features(set: &ModeSet, req: FeatureRequest<'_>) -> Result<Vec<SequenceFeatures>, RunError> {
    ordered_try_map(&set.records, |r| {
        let images = r.render(req.resolution)?;
        sequence_features(r, &images, req)
    })
}
