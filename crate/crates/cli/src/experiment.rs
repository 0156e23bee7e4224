//! End-to-end cross-validated experiment: descriptors, per-fold training and
//! evaluation, statistics, saliency audit and report files.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use georeid_core::embed::{train_embedding, train_probe, Checkpoint, DescriptorKind, EmbeddingModel, InputNorm, LinearProbe};
use georeid_core::evalkit::{evaluate_probe_gallery, folds_from_surgeries, gallery_probe_split, FoldSpec, MetricsReport};
use georeid_core::geom::ManifestEntry;
use georeid_core::render::pnm::depth_pgm;
use georeid_core::rng;
use georeid_core::saliency::{
    input_gradient_saliency, overlay_ppm, region_attribution, Objective, Pipeline, RegionShare, SaliencyMap,
};
use georeid_core::embed::Binning;
use georeid_core::synthor::skeleton::BONE_NAMES;
use serde::Serialize;

use crate::config::{Arm, DatasetSource, ExperimentConfig, GeneratorSettings};
use crate::data::{extract_features, ordered_try_map, Dataset, FeatureRequest, ModeSet, SequenceFeatures};
use crate::error::{RunError, StageContext, StageError};
use crate::report::{
    summarize_conditions, summarize_saliency, write_csv, ArmSaliency, ConditionSummary, MetricRow, SaliencyStatRow,
    ShareRow, FEET_PARTS, HEAD_PARTS, METRICS,
};

pub const SUMMARY_VERSION: u32 = 1;

/// Records completed stages in `<out>/MANIFEST`, one per line, so a failed
/// run shows how far it got.
#[derive(Debug)]
pub struct StageLog {
    path: PathBuf,
    done: Vec<String>,
}

impl StageLog {
    pub fn start(out: &Path) -> Result<Self, StageError> {
        std::fs::create_dir_all(out).map_err(|e| RunError::io(out, e)).stage("setup")?;
        let log = Self {
            path: out.join("MANIFEST"),
            done: Vec::new(),
        };
        log.flush().stage("setup")?;
        Ok(log)
    }

    fn flush(&self) -> Result<(), RunError> {
        let mut text = String::new();
        for s in &self.done {
            text.push_str(s);
            text.push('\n');
        }
        std::fs::write(&self.path, text).map_err(|e| RunError::io(&self.path, e))
    }

    pub fn complete(&mut self, stage: &str) -> Result<(), StageError> {
        self.done.push(stage.to_string());
        self.flush().stage(stage)
    }
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), RunError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| RunError::io(path, e))
}

/// A (train mode, test mode) pairing evaluated under every fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Condition {
    pub train_mode: String,
    pub test_mode: String,
}

/// In-mode conditions for every mode, then the configured transfers.
pub fn conditions(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<Vec<Condition>, RunError> {
    let mut out: Vec<Condition> = dataset
        .modes
        .iter()
        .map(|m| Condition {
            train_mode: m.mode.clone(),
            test_mode: m.mode.clone(),
        })
        .collect();
    for t in &cfg.transfer {
        dataset.mode(&t.train)?;
        dataset.mode(&t.test)?;
        let c = Condition {
            train_mode: t.train.clone(),
            test_mode: t.test.clone(),
        };
        if !out.contains(&c) {
            out.push(c);
        }
    }
    Ok(out)
}

/// Descriptors of every mode, in dataset order.
pub struct FeatureTable {
    pub by_mode: BTreeMap<String, Vec<SequenceFeatures>>,
}

impl FeatureTable {
    pub fn build(cfg: &ExperimentConfig, dataset: &Dataset, soft_mode: Option<&str>) -> Result<Self, RunError> {
        let mut by_mode = BTreeMap::new();
        for set in &dataset.modes {
            let soft = (Some(set.mode.as_str()) == soft_mode).then_some(cfg.saliency.tau);
            let req = FeatureRequest {
                arms: &cfg.arms,
                soft_tau: soft,
                resolution: cfg.resolution(),
            };
            by_mode.insert(set.mode.clone(), extract_features(set, req)?);
        }
        Ok(Self { by_mode })
    }
}

pub fn descriptor_kind(arm: Arm) -> DescriptorKind {
    match arm {
        Arm::Geometric => DescriptorKind::Geometric,
        Arm::Appearance => DescriptorKind::Appearance,
    }
}

/// Seed of the model for `arm` in `fold`. It does not depend on the mode, so
/// identical descriptors give identical models.
pub fn train_seed(cfg: &ExperimentConfig, arm: Arm, fold: usize) -> u64 {
    rng::derive(cfg.seed, "train", &[cfg.train.seed, arm.index(), fold as u64])
}

/// Dense identity labels in sorted identity-id order.
pub fn identity_labels(entries: &[&ManifestEntry]) -> Vec<usize> {
    let ids: BTreeSet<&str> = entries.iter().map(|e| e.identity_id.as_str()).collect();
    let index: BTreeMap<&str, usize> = ids.into_iter().enumerate().map(|(i, s)| (s, i)).collect();
    entries.iter().map(|e| index[e.identity_id.as_str()]).collect()
}

fn select(set: &ModeSet, surgeries: &BTreeSet<String>) -> Vec<usize> {
    (0..set.records.len())
        .filter(|&i| surgeries.contains(&set.records[i].entry.surgery_id))
        .collect()
}

fn features_of(feats: &[SequenceFeatures], idx: &[usize], arm: Arm) -> Result<Vec<Vec<f64>>, RunError> {
    idx.iter()
        .map(|&i| {
            feats[i]
                .get(arm)
                .cloned()
                .ok_or_else(|| RunError::Config(format!("arm {} was not extracted", arm.as_str())))
        })
        .collect()
}

pub fn train_fold_model(
    cfg: &ExperimentConfig,
    set: &ModeSet,
    feats: &[SequenceFeatures],
    fold: &FoldSpec,
    arm: Arm,
) -> Result<(EmbeddingModel, Vec<f64>), RunError> {
    let idx = select(set, &fold.train_surgeries);
    let entries: Vec<&ManifestEntry> = idx.iter().map(|&i| &set.records[i].entry).collect();
    let labels = identity_labels(&entries);
    let xs = features_of(feats, &idx, arm)?;
    let mut tc = cfg.train.clone();
    tc.seed = train_seed(cfg, arm, fold.fold_index);
    let result = train_embedding(&xs, &labels, &tc)?;
    Ok((result.model, result.loss_curve))
}

/// Embed the test-surgery sequences of `set` and score probes against the
/// gallery (first sequence per identity and surgery).
pub fn evaluate_fold(
    model: &EmbeddingModel,
    set: &ModeSet,
    feats: &[SequenceFeatures],
    fold: &FoldSpec,
    arm: Arm,
) -> Result<(MetricsReport, usize, usize), RunError> {
    let idx = select(set, &fold.test_surgeries);
    let entries: Vec<&ManifestEntry> = idx.iter().map(|&i| &set.records[i].entry).collect();
    let xs = features_of(feats, &idx, arm)?;
    let emb = xs.iter().map(|x| model.forward(x)).collect::<Result<Vec<_>, _>>()?;
    let (g, p) = gallery_probe_split(&entries);
    let pick = |ix: &[usize]| -> (Vec<Vec<f64>>, Vec<String>) {
        (
            ix.iter().map(|&i| emb[i].clone()).collect(),
            ix.iter().map(|&i| entries[i].identity_id.clone()).collect(),
        )
    };
    let (ge, gl) = pick(&g);
    let (pe, pl) = pick(&p);
    Ok((evaluate_probe_gallery(&pe, &pl, &ge, &gl)?, g.len(), p.len()))
}

pub fn metric_value(r: &MetricsReport, metric: &str) -> f64 {
    match metric {
        "map" => r.map,
        "cmc3" => r.cmc3,
        "acc_micro" => r.acc_micro,
        "acc_macro" => r.acc_macro,
        other => unreachable!("unknown metric {other}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldRecord {
    pub train_mode: String,
    pub test_mode: String,
    pub arm: String,
    pub fold: usize,
    pub train_sequences: usize,
    pub gallery: usize,
    pub probes: usize,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetInfo {
    pub mode: String,
    pub sequences: usize,
    pub identities: usize,
    pub surgeries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaliencySummary {
    pub mode: String,
    pub tau: f64,
    pub arms: Vec<ArmSaliency>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub v: u32,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub generator: Option<GeneratorSettings>,
    pub datasets: Vec<DatasetInfo>,
    pub folds: BTreeMap<String, Vec<FoldSpec>>,
    pub runs: Vec<FoldRecord>,
    pub conditions: Vec<ConditionSummary>,
    pub saliency: Option<SaliencySummary>,
}

impl Summary {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }
}

fn dataset_info(set: &ModeSet) -> DatasetInfo {
    let ids: BTreeSet<&str> = set.records.iter().map(|r| r.entry.identity_id.as_str()).collect();
    DatasetInfo {
        mode: set.mode.clone(),
        sequences: set.records.len(),
        identities: ids.len(),
        surgeries: set.manifest.surgeries().len(),
    }
}

/// Mode audited by the saliency stage.
pub fn saliency_mode(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<String, RunError> {
    match &cfg.saliency.mode {
        Some(m) => Ok(dataset.mode(m)?.mode.clone()),
        None => Ok(dataset
            .modes
            .iter()
            .find(|m| m.mode == "confounded")
            .unwrap_or(&dataset.modes[0])
            .mode
            .clone()),
    }
}

/// Linear identity probe trained on standardized descriptors, with the
/// standardization folded back into its weights so logits read raw
/// descriptors. The standard-deviation floor keeps histogram bins that only
/// carry color noise from being amplified into large input gradients.
pub fn train_descriptor_probe(
    xs: &[Vec<f64>],
    labels: &[usize],
    classes: usize,
    cfg: &ExperimentConfig,
) -> LinearProbe {
    let norm = InputNorm::fit(xs, cfg.saliency.probe_sd_floor);
    let zs: Vec<Vec<f64>> = xs.iter().map(|x| norm.apply(x)).collect();
    let mut probe = train_probe(&zs, labels, classes, &cfg.saliency.probe);
    let dim = probe.dim;
    for c in 0..classes {
        let row = &mut probe.weights[c * dim..(c + 1) * dim];
        let mut shift = 0.0;
        for j in 0..dim {
            row[j] *= norm.scale[j];
            shift += row[j] * norm.mean[j];
        }
        probe.bias[c] -= shift;
    }
    probe
}

struct SequenceAttribution {
    shares: BTreeMap<i32, RegionShare>,
    entropy: f64,
    all_zero: bool,
    overlay: Option<Vec<u8>>,
}

fn attribute_sequence(
    images: &[georeid_core::render::ProjectedImages],
    pipeline: Pipeline,
    objective: Objective<'_>,
    want_overlay: bool,
) -> Result<SequenceAttribution, RunError> {
    let map: SaliencyMap = input_gradient_saliency(pipeline, images, objective)?;
    let parts: Vec<&[i32]> = images.iter().map(|i| i.parts.as_slice()).collect();
    let shares = region_attribution(&map, &parts)?;
    let mut support = vec![false; map.height * map.width];
    for img in images {
        for (s, &m) in support.iter_mut().zip(&img.mask) {
            *s |= m;
        }
    }
    let overlay = if want_overlay {
        Some(overlay_ppm(&images[0], &map.frames[0])?)
    } else {
        None
    };
    Ok(SequenceAttribution {
        shares: shares.parts,
        entropy: map.normalized_entropy(&support),
        all_zero: map.all_zero,
        overlay,
    })
}

pub struct SaliencyOutput {
    pub summary: SaliencySummary,
    pub shares: Vec<ShareRow>,
    pub stats: Vec<SaliencyStatRow>,
    /// `(file name, PPM bytes)`.
    pub overlays: Vec<(String, Vec<u8>)>,
}

/// Train an identity probe per arm on all sequences of the audited mode,
/// then attribute each probe's true-class logit to pixels and body parts.
pub fn run_saliency(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    mode: &str,
    feats: &[SequenceFeatures],
) -> Result<SaliencyOutput, RunError> {
    let set = dataset.mode(mode)?;
    let entries: Vec<&ManifestEntry> = set.records.iter().map(|r| &r.entry).collect();
    let labels = identity_labels(&entries);
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut order: Vec<usize> = (0..set.records.len()).collect();
    order.sort_by(|&a, &b| entries[a].sequence_id.cmp(&entries[b].sequence_id));
    order.truncate(cfg.saliency.sequences);

    let mut probes = Vec::new();
    for &arm in &cfg.arms {
        let xs: Vec<Vec<f64>> = match arm {
            Arm::Geometric => features_of(feats, &(0..feats.len()).collect::<Vec<_>>(), arm)?,
            Arm::Appearance => feats
                .iter()
                .map(|f| {
                    f.soft_appearance
                        .clone()
                        .ok_or_else(|| RunError::Config("soft appearance descriptors missing".into()))
                })
                .collect::<Result<_, _>>()?,
        };
        let probe = train_descriptor_probe(&xs, &labels, classes, cfg);
        let correct = xs.iter().zip(&labels).filter(|(x, &y)| probe.predict(x) == y).count();
        probes.push((arm, probe, correct as f64 / xs.len() as f64));
    }

    let per_seq: Vec<Vec<SequenceAttribution>> = ordered_try_map(&order, |&i| {
        let record = &set.records[i];
        let images = record.render(cfg.resolution())?;
        probes
            .iter()
            .map(|(arm, probe, _)| {
                let pipeline = match arm {
                    Arm::Geometric => Pipeline::Geometric { fps: record.entry.fps },
                    Arm::Appearance => Pipeline::Appearance {
                        binning: Binning::Soft { tau: cfg.saliency.tau },
                    },
                };
                let objective = Objective::IdentityLogit {
                    probe,
                    class: labels[i],
                };
                let want = order.iter().position(|&o| o == i).is_some_and(|k| k < cfg.saliency.overlays);
                attribute_sequence(&images, pipeline, objective, want)
            })
            .collect()
    })?;

    let n = per_seq.len() as f64;
    let mut shares = Vec::new();
    let mut stats = Vec::new();
    let mut overlays = Vec::new();
    for (a, (arm, _, train_acc)) in probes.iter().enumerate() {
        let mut sum: BTreeMap<i32, (f64, f64)> = BTreeMap::new();
        let mut entropy = 0.0;
        let mut zero = 0usize;
        for (k, seq) in per_seq.iter().enumerate() {
            let s = &seq[a];
            for (&label, share) in &s.shares {
                let e = sum.entry(label).or_default();
                e.0 += share.saliency_share;
                e.1 += share.area_share;
            }
            entropy += s.entropy;
            zero += usize::from(s.all_zero);
            if let Some(bytes) = &s.overlay {
                let id = &set.records[order[k]].entry.sequence_id;
                overlays.push((format!("{}_{}_{id}.ppm", arm.as_str(), mode), bytes.clone()));
            }
        }
        for (label, (sal, area)) in sum {
            shares.push(ShareRow {
                arm: arm.as_str().into(),
                part: label,
                part_name: BONE_NAMES.get(label as usize).map_or_else(|| format!("part{label}"), |s| s.to_string()),
                saliency_share: sal / n,
                area_share: area / n,
            });
        }
        for (statistic, value) in [
            ("sequences", n),
            ("all_zero_maps", zero as f64),
            ("mean_normalized_entropy", entropy / n),
            ("probe_train_accuracy", *train_acc),
        ] {
            stats.push(SaliencyStatRow {
                arm: arm.as_str().into(),
                statistic: statistic.into(),
                value,
            });
        }
    }
    Ok(SaliencyOutput {
        summary: SaliencySummary {
            mode: mode.to_string(),
            tau: cfg.saliency.tau,
            arms: summarize_saliency(&shares, &stats),
        },
        shares,
        stats,
        overlays,
    })
}

/// Write the saliency CSVs and overlays under `out`.
pub fn write_saliency(out: &Path, s: &SaliencyOutput) -> Result<(), RunError> {
    write_file(&out.join("region_shares.csv"), write_csv(&s.shares)?)?;
    write_file(&out.join("saliency_stats.csv"), write_csv(&s.stats)?)?;
    for (name, bytes) in &s.overlays {
        write_file(&out.join("overlays").join(name), bytes)?;
    }
    Ok(())
}

fn check_feet_head_labels() {
    debug_assert_eq!(BONE_NAMES[HEAD_PARTS[0] as usize], "head");
    debug_assert!(FEET_PARTS.iter().all(|&p| BONE_NAMES[p as usize].ends_with("foot")));
}

/// Run the full cross-validated experiment and write every artifact to
/// `out`. Results do not depend on the size of the rayon pool.
pub fn run_experiment(cfg: &ExperimentConfig, base_dir: &Path, out: &Path) -> Result<Summary, StageError> {
    check_feet_head_labels();
    let mut log = StageLog::start(out)?;

    let dataset = Dataset::from_config(cfg, base_dir).stage("dataset")?;
    let conds = conditions(cfg, &dataset).stage("dataset")?;
    let sal_mode = if cfg.saliency.enabled {
        Some(saliency_mode(cfg, &dataset).stage("dataset")?)
    } else {
        None
    };
    log.complete("dataset")?;

    let features = FeatureTable::build(cfg, &dataset, sal_mode.as_deref()).stage("descriptors")?;
    log.complete("descriptors")?;

    for set in &dataset.modes {
        for record in set.records.iter().take(cfg.depth_dumps) {
            let images = record.render(cfg.resolution()).stage("depth")?;
            let path = out
                .join("depth")
                .join(format!("{}_{}_f000.pgm", set.mode, record.entry.sequence_id));
            write_file(&path, depth_pgm(&images[0])).stage("depth")?;
        }
    }
    log.complete("depth")?;

    let mut folds: BTreeMap<String, Vec<FoldSpec>> = BTreeMap::new();
    for c in &conds {
        if !folds.contains_key(&c.train_mode) {
            let set = dataset.mode(&c.train_mode).stage("folds")?;
            folds.insert(
                c.train_mode.clone(),
                folds_from_surgeries(set.manifest.surgeries(), cfg.k).stage("folds")?,
            );
        }
    }
    log.complete("folds")?;

    // One model per (train mode, arm, fold), shared by all test modes.
    let mut jobs: Vec<(String, Arm, usize)> = Vec::new();
    for (mode, fs) in &folds {
        for &arm in &cfg.arms {
            for f in fs {
                jobs.push((mode.clone(), arm, f.fold_index));
            }
        }
    }
    let trained = ordered_try_map(&jobs, |(mode, arm, fold)| {
        let set = dataset.mode(mode)?;
        train_fold_model(cfg, set, &features.by_mode[mode], &folds[mode][*fold], *arm)
    })
    .stage("train")?;
    for ((mode, arm, fold), (model, _)) in jobs.iter().zip(&trained) {
        let mut tc = cfg.train.clone();
        tc.seed = train_seed(cfg, *arm, *fold);
        let ck = Checkpoint::new(descriptor_kind(*arm), model.clone(), tc);
        let path = out
            .join("checkpoints")
            .join(format!("{mode}_{}_fold{fold}.json", arm.as_str()));
        write_file(&path, ck.to_json()).stage("train")?;
    }
    log.complete("train")?;

    let mut eval_jobs = Vec::new();
    for c in &conds {
        for &arm in &cfg.arms {
            for f in &folds[&c.train_mode] {
                let j = jobs
                    .iter()
                    .position(|(m, a, k)| *m == c.train_mode && *a == arm && *k == f.fold_index)
                    .expect("model was trained");
                eval_jobs.push((c.clone(), arm, f.clone(), j));
            }
        }
    }
    let evaluated = ordered_try_map(&eval_jobs, |(c, arm, f, j)| {
        let set = dataset.mode(&c.test_mode)?;
        evaluate_fold(&trained[*j].0, set, &features.by_mode[&c.test_mode], f, *arm)
    })
    .stage("evaluate")?;
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for ((c, arm, f, j), (report, g, p)) in eval_jobs.iter().zip(&evaluated) {
        for metric in METRICS {
            rows.push(MetricRow {
                train_mode: c.train_mode.clone(),
                test_mode: c.test_mode.clone(),
                arm: arm.as_str().into(),
                fold: f.fold_index,
                metric: metric.into(),
                value: metric_value(report, metric),
            });
        }
        runs.push(FoldRecord {
            train_mode: c.train_mode.clone(),
            test_mode: c.test_mode.clone(),
            arm: arm.as_str().into(),
            fold: f.fold_index,
            train_sequences: select(dataset.mode(&c.train_mode).stage("evaluate")?, &f.train_surgeries).len(),
            gallery: *g,
            probes: *p,
            final_loss: trained[*j].1.last().copied().unwrap_or(f64::NAN),
        });
    }
    write_file(&out.join("metrics.csv"), write_csv(&rows).stage("evaluate")?).stage("evaluate")?;
    log.complete("evaluate")?;

    let summaries = summarize_conditions(&rows).stage("statistics")?;
    log.complete("statistics")?;

    let saliency = match &sal_mode {
        Some(mode) => {
            let s = run_saliency(cfg, &dataset, mode, &features.by_mode[mode]).stage("saliency")?;
            write_saliency(out, &s).stage("saliency")?;
            log.complete("saliency")?;
            Some(s.summary)
        }
        None => None,
    };

    let summary = Summary {
        v: SUMMARY_VERSION,
        seed: cfg.seed,
        config: cfg.clone(),
        generator: match &cfg.dataset {
            DatasetSource::Synthetic(s) => Some(GeneratorSettings::of(s)),
            DatasetSource::Manifest(_) => None,
        },
        datasets: dataset.modes.iter().map(dataset_info).collect(),
        folds,
        runs,
        conditions: summaries,
        saliency,
    };
    write_file(&out.join("summary.json"), summary.to_json()).stage("report")?;
    log.complete("report")?;
    Ok(summary)
}
