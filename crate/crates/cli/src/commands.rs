//! Single-stage subcommands; `xval` runs them all through
//! [`crate::experiment::run_experiment`].

use std::path::{Path, PathBuf};

use georeid_core::embed::{train_embedding, write_descriptor_csv, Checkpoint, Descriptor};
use georeid_core::evalkit::{evaluate_probe_gallery, gallery_probe_split, MetricsReport};
use georeid_core::geom::{save_sequence, ManifestEntry, PlyForm};
use georeid_core::render::pnm::{color_ppm, depth_pgm, parts_pgm};
use serde::Serialize;

use crate::config::{Arm, ExperimentConfig};
use crate::data::{extract_features, ordered_try_map, Dataset, FeatureRequest};
use crate::error::{RunError, StageContext, StageError};
use crate::experiment::{
    descriptor_kind, identity_labels, run_saliency, saliency_mode, train_seed, write_file, write_saliency,
    SaliencySummary, StageLog,
};

/// Write every sequence as PLY frames plus one manifest per mode, in the
/// layout `load_manifest` reads back.
pub fn synth(cfg: &ExperimentConfig, base_dir: &Path, out: &Path) -> Result<Vec<PathBuf>, StageError> {
    let mut log = StageLog::start(out)?;
    let dataset = Dataset::from_config(cfg, base_dir).stage("dataset")?;
    let mut manifests = Vec::new();
    for set in &dataset.modes {
        ordered_try_map(&set.records, |r| {
            let seq = r.load()?;
            Ok(save_sequence(&seq, &out.join(&r.entry.file_path), PlyForm::BinaryLe)?)
        })
        .stage("synth")?;
        let path = out.join(format!("manifest_{}.json", set.mode));
        write_file(&path, set.manifest.to_json()).stage("synth")?;
        manifests.push(path);
    }
    log.complete("synth")?;
    Ok(manifests)
}

/// Dump the first frame of every sequence as depth, color and part images.
pub fn render(cfg: &ExperimentConfig, base_dir: &Path, out: &Path) -> Result<usize, StageError> {
    let mut log = StageLog::start(out)?;
    let dataset = Dataset::from_config(cfg, base_dir).stage("dataset")?;
    let mut count = 0;
    for set in &dataset.modes {
        let dir = out.join("render").join(&set.mode);
        ordered_try_map(&set.records, |r| {
            let images = r.render(cfg.resolution())?;
            let id = &r.entry.sequence_id;
            write_file(&dir.join(format!("{id}_depth.pgm")), depth_pgm(&images[0]))?;
            write_file(&dir.join(format!("{id}_color.ppm")), color_ppm(&images[0]))?;
            write_file(&dir.join(format!("{id}_parts.pgm")), parts_pgm(&images[0]))
        })
        .stage("render")?;
        count += set.records.len();
    }
    log.complete("render")?;
    Ok(count)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainedModel {
    pub mode: String,
    pub arm: String,
    pub checkpoint: PathBuf,
    pub loss_curve: Vec<f64>,
}

/// Train one model per mode and arm on all sequences; write checkpoints and
/// the descriptor cache.
pub fn train(cfg: &ExperimentConfig, base_dir: &Path, out: &Path) -> Result<Vec<TrainedModel>, StageError> {
    let mut log = StageLog::start(out)?;
    let dataset = Dataset::from_config(cfg, base_dir).stage("dataset")?;
    let mut trained = Vec::new();
    for set in &dataset.modes {
        let req = FeatureRequest {
            arms: &cfg.arms,
            soft_tau: None,
            resolution: cfg.resolution(),
        };
        let feats = extract_features(set, req).stage("descriptors")?;
        let entries: Vec<&ManifestEntry> = set.records.iter().map(|r| &r.entry).collect();
        let labels = identity_labels(&entries);
        for &arm in &cfg.arms {
            let xs: Vec<Vec<f64>> = feats.iter().filter_map(|f| f.get(arm).cloned()).collect();
            let descs = xs
                .iter()
                .zip(&entries)
                .map(|(x, e)| {
                    Descriptor::new(descriptor_kind(arm), x.clone()).map_err(|source| RunError::Descriptor {
                        sequence: e.sequence_id.clone(),
                        source,
                    })
                })
                .collect::<Result<Vec<_>, _>>()
                .stage("descriptors")?;
            let csv = write_descriptor_csv(entries.iter().map(|e| e.sequence_id.as_str()).zip(&descs))
                .stage("descriptors")?;
            write_file(
                &out.join("descriptors").join(format!("{}_{}.csv", set.mode, arm.as_str())),
                csv,
            )
            .stage("descriptors")?;

            let mut tc = cfg.train.clone();
            tc.seed = train_seed(cfg, arm, usize::MAX);
            let result = train_embedding(&xs, &labels, &tc).stage("train")?;
            let path = out
                .join("checkpoints")
                .join(format!("{}_{}_all.json", set.mode, arm.as_str()));
            write_file(&path, Checkpoint::new(descriptor_kind(arm), result.model, tc).to_json()).stage("train")?;
            trained.push(TrainedModel {
                mode: set.mode.clone(),
                arm: arm.as_str().into(),
                checkpoint: path,
                loss_curve: result.loss_curve,
            });
        }
    }
    log.complete("train")?;
    Ok(trained)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub mode: String,
    pub arm: String,
    pub gallery: usize,
    pub probes: usize,
    pub report: MetricsReport,
}

/// Evaluate a checkpoint on every sequence of each mode: the first sequence
/// per identity and surgery is the gallery, the rest are probes.
pub fn eval(cfg: &ExperimentConfig, base_dir: &Path, checkpoint: &Path) -> Result<Vec<EvalResult>, StageError> {
    let text = std::fs::read_to_string(checkpoint)
        .map_err(|e| RunError::io(checkpoint, e))
        .stage("load")?;
    let ck = Checkpoint::from_json(&text).stage("load")?;
    let arm = Arm::parse(ck.kind.as_str()).expect("descriptor kinds name arms");
    let dataset = Dataset::from_config(cfg, base_dir).stage("dataset")?;
    let mut results = Vec::new();
    for set in &dataset.modes {
        let req = FeatureRequest {
            arms: &[arm],
            soft_tau: None,
            resolution: cfg.resolution(),
        };
        let feats = extract_features(set, req).stage("descriptors")?;
        let emb = feats
            .iter()
            .map(|f| ck.model.forward(f.get(arm).expect("requested arm")))
            .collect::<Result<Vec<_>, _>>()
            .stage("embed")?;
        let entries: Vec<&ManifestEntry> = set.records.iter().map(|r| &r.entry).collect();
        let (g, p) = gallery_probe_split(&entries);
        let part = |ix: &[usize]| -> (Vec<Vec<f64>>, Vec<String>) {
            (
                ix.iter().map(|&i| emb[i].clone()).collect(),
                ix.iter().map(|&i| entries[i].identity_id.clone()).collect(),
            )
        };
        let (ge, gl) = part(&g);
        let (pe, pl) = part(&p);
        let report = evaluate_probe_gallery(&pe, &pl, &ge, &gl).stage("evaluate")?;
        results.push(EvalResult {
            mode: set.mode.clone(),
            arm: arm.as_str().into(),
            gallery: g.len(),
            probes: p.len(),
            report,
        });
    }
    Ok(results)
}

/// Run only the saliency audit.
pub fn saliency(cfg: &ExperimentConfig, base_dir: &Path, out: &Path) -> Result<SaliencySummary, StageError> {
    let mut log = StageLog::start(out)?;
    let dataset = Dataset::from_config(cfg, base_dir).stage("dataset")?;
    let mode = saliency_mode(cfg, &dataset).stage("dataset")?;
    let set = dataset.mode(&mode).stage("dataset")?;
    let req = FeatureRequest {
        arms: &cfg.arms,
        soft_tau: Some(cfg.saliency.tau),
        resolution: cfg.resolution(),
    };
    let feats = extract_features(set, req).stage("descriptors")?;
    log.complete("descriptors")?;
    let s = run_saliency(cfg, &dataset, &mode, &feats).stage("saliency")?;
    write_saliency(out, &s).stage("saliency")?;
    write_file(
        &out.join("saliency.json"),
        serde_json::to_string_pretty(&s.summary).expect("saliency summary serializes") + "\n",
    )
    .stage("saliency")?;
    log.complete("saliency")?;
    Ok(s.summary)
}
