//! Triplet loss with online batch-hard mining, P x K batch training and a
//! finite-difference gradient check.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{EmbeddingModel, ForwardCache, Gradients, InputNorm, ModelError};
use crate::rng;

/// `max(0, d_ap - d_an + margin)`.
pub fn triplet_loss(d_ap: f64, d_an: f64, margin: f64) -> f64 {
    (d_ap - d_an + margin).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum MineError {
    #[error("sample {anchor} is the only one with its label")]
    SingletonLabel { anchor: usize },
    #[error("sample {anchor} has no sample with a different label")]
    NoNegative { anchor: usize },
    #[error("distance matrix is not {n}x{n}")]
    Shape { n: usize },
}

/// For every anchor, the farthest same-label sample and the nearest
/// different-label sample; ties go to the lowest index.
pub fn batch_hard_mine<L: PartialEq>(dist: &[Vec<f64>], labels: &[L]) -> Result<Vec<Triplet>, MineError> {
    let n = labels.len();
    if dist.len() != n || dist.iter().any(|row| row.len() != n) {
        return Err(MineError::Shape { n });
    }
    (0..n)
        .map(|i| {
            let mut pos: Option<usize> = None;
            let mut neg: Option<usize> = None;
            for j in 0..n {
                if j == i {
                    continue;
                }
                if labels[j] == labels[i] {
                    if pos.is_none_or(|p| dist[i][j] > dist[i][p]) {
                        pos = Some(j);
                    }
                } else if neg.is_none_or(|q| dist[i][j] < dist[i][q]) {
                    neg = Some(j);
                }
            }
            Ok(Triplet {
                anchor: i,
                positive: pos.ok_or(MineError::SingletonLabel { anchor: i })?,
                negative: neg.ok_or(MineError::NoNegative { anchor: i })?,
            })
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn squared_distances(emb: &[Vec<f64>]) -> Vec<Vec<f64>> {
    emb.iter()
        .map(|a| emb.iter().map(|b| sq_dist(a, b)).collect())
        .collect()
}

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("need {needed} identities with at least {per_identity} samples each, found {found}")]
    InsufficientData {
        needed: usize,
        per_identity: usize,
        found: usize,
    },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mine(#[from] MineError),
}

/// Loss of a batch and everything needed to recognize loss kinks.
#[derive(Debug, Clone)]
pub struct BatchEval {
    pub loss: f64,
    pub grads: Gradients,
    pub triplets: Vec<Triplet>,
    /// Which triplets have a positive hinge.
    pub active: Vec<bool>,
    /// Concatenated ReLU patterns of all samples.
    pub activations: Vec<bool>,
}

fn forward_all(model: &EmbeddingModel, xs: &[&[f64]]) -> Result<Vec<ForwardCache>, ModelError> {
    xs.iter().map(|x| model.forward_cached(x)).collect()
}

/// Mean triplet loss over the given triplets on squared Euclidean embedding
/// distances, with its parameter gradient.
pub fn triplet_batch_eval(
    model: &EmbeddingModel,
    xs: &[&[f64]],
    triplets: &[Triplet],
    margin: f64,
) -> Result<BatchEval, ModelError> {
    let caches = forward_all(model, xs)?;
    Ok(eval_with(model, &caches, triplets.to_vec(), margin))
}

fn eval_with(model: &EmbeddingModel, caches: &[ForwardCache], triplets: Vec<Triplet>, margin: f64) -> BatchEval {
    let dim = model.output_dim();
    let mut d_out = vec![vec![0.0; dim]; caches.len()];
    let mut total = 0.0;
    let mut active = Vec::with_capacity(triplets.len());
    let scale = 1.0 / triplets.len().max(1) as f64;
    for t in &triplets {
        let (a, p, n) = (
            &caches[t.anchor].output,
            &caches[t.positive].output,
            &caches[t.negative].output,
        );
        let l = triplet_loss(sq_dist(a, p), sq_dist(a, n), margin);
        let on = l > 0.0;
        active.push(on);
        if !on {
            continue;
        }
        total += l;
        for k in 0..dim {
            let (ga, gp, gn) = (
                2.0 * (n[k] - p[k]),
                -2.0 * (a[k] - p[k]),
                2.0 * (a[k] - n[k]),
            );
            d_out[t.anchor][k] += scale * ga;
            d_out[t.positive][k] += scale * gp;
            d_out[t.negative][k] += scale * gn;
        }
    }
    let mut grads = Gradients::zeros_like(model);
    for (cache, d) in caches.iter().zip(&d_out) {
        if d.iter().any(|v| *v != 0.0) {
            model.backward(cache, d, &mut grads);
        }
    }
    BatchEval {
        loss: total * scale,
        grads,
        triplets,
        active,
        activations: caches.iter().flat_map(|c| c.activation_pattern()).collect(),
    }
}

/// Batch-hard triplet loss of a labeled batch and its gradient.
pub fn batch_hard_eval<L: PartialEq>(
    model: &EmbeddingModel,
    xs: &[&[f64]],
    labels: &[L],
    margin: f64,
) -> Result<BatchEval, TrainError> {
    let caches = forward_all(model, xs)?;
    let emb: Vec<Vec<f64>> = caches.iter().map(|c| c.output.clone()).collect();
    let triplets = batch_hard_mine(&squared_distances(&emb), labels)?;
    Ok(eval_with(model, &caches, triplets, margin))
}

fn default_hidden() -> Vec<usize> {
    vec![64, 64]
}

fn default_embed_dim() -> usize {
    32
}

fn default_sd_floor() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_p: usize,
    pub batch_k: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    /// Standard-deviation floor of the fitted input standardization; a
    /// non-positive value disables standardization.
    pub input_sd_floor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 0.3,
            learning_rate: 1e-3,
            epochs: 50,
            batch_p: 8,
            batch_k: 4,
            seed: 0,
            hidden: default_hidden(),
            embed_dim: default_embed_dim(),
            input_sd_floor: default_sd_floor(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad("margin must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be non-negative");
        }
        if self.batch_p < 2 || self.batch_k < 2 {
            return bad("batch_p and batch_k must be at least 2");
        }
        if self.embed_dim == 0 || self.hidden.contains(&0) {
            return bad("layer widths must be positive");
        }
        Ok(())
    }
}

/// Lower bound on the number of P x K batches per epoch.
pub const MIN_BATCHES_PER_EPOCH: usize = 4;

/// Draw the fixed list of P x K batches used in every epoch. Identities with
/// fewer than K samples are never drawn.
pub fn batch_plan(labels: &[usize], cfg: &TrainConfig) -> Result<Vec<Vec<usize>>, TrainError> {
    let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_label.entry(l).or_default().push(i);
    }
    let eligible: Vec<&Vec<usize>> = by_label.values().filter(|v| v.len() >= cfg.batch_k).collect();
    if eligible.len() < cfg.batch_p {
        return Err(TrainError::InsufficientData {
            needed: cfg.batch_p,
            per_identity: cfg.batch_k,
            found: eligible.len(),
        });
    }
    let per_batch = cfg.batch_p * cfg.batch_k;
    let n_batches = labels.len().div_ceil(per_batch).max(MIN_BATCHES_PER_EPOCH);
    Ok((0..n_batches)
        .map(|b| {
            let mut r = rng::stream(cfg.seed, "batch", &[b as u64]);
            let mut ids: Vec<usize> = (0..eligible.len()).collect();
            ids.shuffle(&mut r);
            let mut batch = Vec::with_capacity(per_batch);
            for &id in &ids[..cfg.batch_p] {
                let mut members = eligible[id].clone();
                members.shuffle(&mut r);
                batch.extend_from_slice(&members[..cfg.batch_k]);
            }
            batch
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub model: EmbeddingModel,
    /// Mean batch loss of each epoch, measured before each step.
    pub loss_curve: Vec<f64>,
}

/// Train an embedding with batch-hard triplet loss and plain SGD.
///
/// Every epoch runs the same seeded list of P x K batches (see
/// [`batch_plan`]), so a zero learning rate yields a flat loss curve.
pub fn train_embedding(xs: &[Vec<f64>], labels: &[usize], cfg: &TrainConfig) -> Result<TrainResult, TrainError> {
    cfg.validate()?;
    if xs.len() != labels.len() {
        return Err(TrainError::Config("descriptor and label counts differ".into()));
    }
    let plan = batch_plan(labels, cfg)?;
    let dim = xs[0].len();
    let mut dims = vec![dim];
    dims.extend(&cfg.hidden);
    dims.push(cfg.embed_dim);
    let mut model = EmbeddingModel::init(&dims, cfg.seed)?;
    if cfg.input_sd_floor > 0.0 {
        model.input_norm = Some(InputNorm::fit(xs, cfg.input_sd_floor));
    }
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let mut sum = 0.0;
        for batch in &plan {
            let bx: Vec<&[f64]> = batch.iter().map(|&i| xs[i].as_slice()).collect();
            let bl: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let eval = batch_hard_eval(&model, &bx, &bl, cfg.margin)?;
            sum += eval.loss;
            model.apply_step(&eval.grads, cfg.learning_rate);
        }
        loss_curve.push(sum / plan.len() as f64);
    }
    Ok(TrainResult { model, loss_curve })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameters skipped because a ±step crossed a ReLU, hinge or mining
    /// boundary.
    pub skipped_kinks: usize,
}

pub const GRAD_CHECK_STEP: f64 = 1e-4;
pub const GRAD_CHECK_MIN_PARAMS: usize = 200;

/// `|ga - gn| / max(1e-8, |ga| + |gn|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compare the analytic batch-hard gradient with central differences on
/// randomly chosen parameters (all of them if the model has fewer than
/// `min_params`). Parameters whose perturbation changes the ReLU pattern,
/// the mined triplets or the set of active hinges are skipped, since the
/// loss is not differentiable across those boundaries.
pub fn gradient_check<L: PartialEq>(
    model: &EmbeddingModel,
    xs: &[&[f64]],
    labels: &[L],
    margin: f64,
    min_params: usize,
    seed: u64,
) -> Result<GradCheckReport, TrainError> {
    let base = batch_hard_eval(model, xs, labels, margin)?;
    let mut order: Vec<usize> = (0..model.param_count()).collect();
    let mut r = rng::stream(seed, "grad-check", &[]);
    order.shuffle(&mut r);
    let same_regime =
        |e: &BatchEval| e.triplets == base.triplets && e.active == base.active && e.activations == base.activations;

    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped_kinks: 0,
    };
    for idx in order {
        if report.checked >= min_params {
            break;
        }
        let theta = model.param(idx);
        probe.set_param(idx, theta + GRAD_CHECK_STEP);
        let up = batch_hard_eval(&probe, xs, labels, margin)?;
        probe.set_param(idx, theta - GRAD_CHECK_STEP);
        let down = batch_hard_eval(&probe, xs, labels, margin)?;
        probe.set_param(idx, theta);
        if !same_regime(&up) || !same_regime(&down) {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (up.loss - down.loss) / (2.0 * GRAD_CHECK_STEP);
        let err = relative_error(base.grads.get(idx), numeric);
        report.max_rel_error = report.max_rel_error.max(err);
        report.checked += 1;
    }
    Ok(report)
}

/// Random unit-scale model and labeled batch for gradient checking.
pub fn random_check_problem(seed: u64, n_ids: usize, per_id: usize, dims: &[usize]) -> (EmbeddingModel, Vec<Vec<f64>>, Vec<usize>) {
    let mut model = EmbeddingModel::init(dims, seed).expect("valid dims");
    let mut r = rng::stream(seed, "check-batch", &[]);
    // Small positive biases keep most ReLUs alive.
    for layer in &mut model.layers {
        for b in &mut layer.bias {
            *b = 0.1 * r.random::<f64>();
        }
    }
    let mut xs = Vec::new();
    let mut labels = Vec::new();
    for id in 0..n_ids {
        let center: Vec<f64> = (0..dims[0]).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
        for _ in 0..per_id {
            xs.push(center.iter().map(|c| c + 0.5 * (r.random::<f64>() - 0.5)).collect());
            labels.push(id);
        }
    }
    (model, xs, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hinge_values() {
        assert_eq!(triplet_loss(0.5, 1.0, 0.3), 0.0);
        assert!((triplet_loss(1.0, 0.5, 0.3) - 0.8).abs() < 1e-15);
        assert_eq!(triplet_loss(0.7, 0.7, 0.3), 0.3);
    }

    #[test]
    fn mining_small_example() {
        let d = vec![
            vec![0.0, 0.2, 0.9, 0.4],
            vec![0.2, 0.0, 0.5, 0.6],
            vec![0.9, 0.5, 0.0, 0.3],
            vec![0.4, 0.6, 0.3, 0.0],
        ];
        let t = batch_hard_mine(&d, &["A", "A", "B", "B"]).unwrap();
        assert_eq!((t[0].positive, t[0].negative), (1, 3));
        assert_eq!((t[2].positive, t[2].negative), (3, 1));
    }

    #[test]
    fn mining_ties_take_lowest_index() {
        let d = vec![vec![0.0, 1.0, 1.0, 1.0, 1.0]; 5]
            .into_iter()
            .enumerate()
            .map(|(i, mut row)| {
                row.iter_mut().for_each(|v| *v = 1.0);
                row[i] = 0.0;
                row
            })
            .collect::<Vec<_>>();
        let t = batch_hard_mine(&d, &[0, 1, 0, 1, 1]).unwrap();
        assert_eq!((t[0].positive, t[0].negative), (2, 1));
        assert_eq!((t[4].positive, t[4].negative), (1, 0));
    }

    #[test]
    fn singleton_label_is_rejected() {
        let d = vec![vec![0.0; 3]; 3];
        assert_eq!(
            batch_hard_mine(&d, &["A", "B", "B"]),
            Err(MineError::SingletonLabel { anchor: 0 })
        );
    }

    #[test]
    fn plan_needs_enough_identities() {
        let cfg = TrainConfig {
            batch_p: 3,
            batch_k: 2,
            ..TrainConfig::default()
        };
        let labels = [0, 0, 1, 1, 2];
        assert_eq!(
            batch_plan(&labels, &cfg),
            Err(TrainError::InsufficientData {
                needed: 3,
                per_identity: 2,
                found: 2
            })
        );
    }
}
