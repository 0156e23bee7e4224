//! Input-gradient attribution of identity decisions to pixels and body parts.
//!
//! The objective (a match score or a classifier logit) is differentiated
//! with respect to the descriptor, and that gradient is pulled back onto the
//! pixels the descriptor reads: depth pixels for the geometric descriptor,
//! RGB pixels for the soft-binned appearance descriptor.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::descriptor::{
    appearance_descriptor_with, depth_band_weights, geometric_descriptor, soft_appearance_vjp, Binning,
    DescriptorError, DEPTH_BAND_OFFSET,
};
use crate::embed::{EmbeddingModel, LinearProbe, ModelError};
use crate::geom::Rgb;
use crate::render::pnm::rgb_ppm;
use crate::render::ProjectedImages;

#[derive(Debug, Error, PartialEq)]
pub enum SaliencyError {
    #[error("hard-binned descriptors have no useful gradient; use soft binning")]
    NonDifferentiablePath,
    #[error("objective expects {expected} descriptor values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("class {class} is out of range for a probe with {classes} classes")]
    BadClass { class: usize, classes: usize },
    #[error("saliency map and part images do not align")]
    ShapeMismatch,
    #[error("no frames to attribute")]
    Empty,
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Descriptor extractor on the saliency path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pipeline {
    Geometric { fps: f64 },
    Appearance { binning: Binning },
}

/// Scalar function of the descriptor whose gradient is attributed.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    /// Dot product of the embedding with a unit reference embedding.
    MatchScore {
        model: &'a EmbeddingModel,
        reference: &'a [f64],
    },
    /// Logit of `class` in a linear classifier over descriptors.
    IdentityLogit { probe: &'a LinearProbe, class: usize },
    /// Fixed linear function `w . descriptor`.
    Linear(&'a [f64]),
}

impl Objective<'_> {
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, SaliencyError> {
        let check = |expected: usize| {
            if expected == x.len() {
                Ok(())
            } else {
                Err(SaliencyError::DimensionMismatch {
                    expected,
                    got: x.len(),
                })
            }
        };
        match *self {
            Objective::MatchScore { model, reference } => {
                let cache = model.forward_cached(x)?;
                if reference.len() != model.output_dim() {
                    return Err(SaliencyError::DimensionMismatch {
                        expected: model.output_dim(),
                        got: reference.len(),
                    });
                }
                let mut scratch = crate::embed::Gradients::zeros_like(model);
                Ok(model.backward(&cache, reference, &mut scratch))
            }
            Objective::IdentityLogit { probe, class } => {
                check(probe.dim)?;
                if class >= probe.classes {
                    return Err(SaliencyError::BadClass {
                        class,
                        classes: probe.classes,
                    });
                }
                Ok(probe.logit_gradient(class).to_vec())
            }
            Objective::Linear(w) => {
                check(w.len())?;
                Ok(w.to_vec())
            }
        }
    }
}

/// Nonnegative per-pixel weights for every frame, summing to one overall
/// unless the objective has no gradient at all (`all_zero`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    pub height: usize,
    pub width: usize,
    /// `frames[f][r * width + c]`.
    pub frames: Vec<Vec<f64>>,
    pub all_zero: bool,
}

impl SaliencyMap {
    fn from_raw(height: usize, width: usize, mut frames: Vec<Vec<f64>>) -> Self {
        let total: f64 = frames.iter().flatten().sum();
        let all_zero = total == 0.0;
        if !all_zero {
            for v in frames.iter_mut().flatten() {
                *v /= total;
            }
        }
        Self {
            height,
            width,
            frames,
            all_zero,
        }
    }

    /// Sum over frames: one `height x width` map.
    pub fn collapsed(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.height * self.width];
        for f in &self.frames {
            for (o, v) in out.iter_mut().zip(f) {
                *o += v;
            }
        }
        out
    }

    pub fn total(&self) -> f64 {
        self.frames.iter().flatten().sum()
    }

    /// Shannon entropy of the collapsed map over its support-eligible
    /// pixels (`mask`), divided by `ln(count)`; 1 means perfectly diffuse.
    pub fn normalized_entropy(&self, mask: &[bool]) -> f64 {
        let m = self.collapsed();
        let n = mask.iter().filter(|&&b| b).count();
        if self.all_zero || n < 2 {
            return 0.0;
        }
        let h: f64 = m
            .iter()
            .zip(mask)
            .filter(|(v, &b)| b && **v > 0.0)
            .map(|(v, _)| -v * v.ln())
            .sum();
        h / (n as f64).ln()
    }
}

/// `|d objective / d pixel|`, summed over channels, for every frame.
pub fn input_gradient_saliency(
    pipeline: Pipeline,
    images: &[ProjectedImages],
    objective: Objective<'_>,
) -> Result<SaliencyMap, SaliencyError> {
    let first = images.first().ok_or(SaliencyError::Empty)?;
    let (h, w) = first.resolution();
    if images.iter().any(|i| i.resolution() != (h, w)) {
        return Err(SaliencyError::ShapeMismatch);
    }
    let raw: Vec<Vec<f64>> = match pipeline {
        Pipeline::Geometric { fps } => {
            let d = geometric_descriptor(images, fps)?;
            let g = objective.gradient(&d.values)?;
            depth_band_weights(images)
                .into_iter()
                .map(|frame| {
                    frame
                        .into_iter()
                        .map(|e| e.map_or(0.0, |(b, wt)| (g[DEPTH_BAND_OFFSET + b] * wt).abs()))
                        .collect()
                })
                .collect()
        }
        Pipeline::Appearance { binning } => {
            let Binning::Soft { tau } = binning else {
                return Err(SaliencyError::NonDifferentiablePath);
            };
            let d = appearance_descriptor_with(images, binning)?;
            let g = objective.gradient(&d.values)?;
            soft_appearance_vjp(images, tau, &g)?
                .into_iter()
                .map(|frame| frame.into_iter().map(|c| c.iter().map(|v| v.abs()).sum()).collect())
                .collect()
        }
    };
    Ok(SaliencyMap::from_raw(h, w, raw))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionShare {
    pub saliency_share: f64,
    pub area_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionShares {
    /// Keyed by part label; labels `< 0` (empty or unlabeled) are excluded.
    pub parts: BTreeMap<i32, RegionShare>,
    /// True when no saliency falls on labeled pixels.
    pub all_zero: bool,
}

impl RegionShares {
    /// Combined shares of a set of part labels.
    pub fn combined(&self, labels: &[i32]) -> RegionShare {
        let mut out = RegionShare {
            saliency_share: 0.0,
            area_share: 0.0,
        };
        for l in labels {
            if let Some(s) = self.parts.get(l) {
                out.saliency_share += s.saliency_share;
                out.area_share += s.area_share;
            }
        }
        out
    }
}

/// Saliency and pixel-area shares of each body part, pooled over frames.
pub fn region_attribution(map: &SaliencyMap, parts: &[&[i32]]) -> Result<RegionShares, SaliencyError> {
    if parts.len() != map.frames.len() || parts.iter().any(|p| p.len() != map.height * map.width) {
        return Err(SaliencyError::ShapeMismatch);
    }
    let mut mass: BTreeMap<i32, (f64, usize)> = BTreeMap::new();
    for (weights, labels) in map.frames.iter().zip(parts) {
        for (&w, &l) in weights.iter().zip(labels.iter()) {
            if l >= 0 {
                let e = mass.entry(l).or_default();
                e.0 += w;
                e.1 += 1;
            }
        }
    }
    let total_w: f64 = mass.values().map(|v| v.0).sum();
    let total_px: usize = mass.values().map(|v| v.1).sum();
    let all_zero = total_w == 0.0;
    let parts = mass
        .into_iter()
        .map(|(l, (w, n))| {
            (
                l,
                RegionShare {
                    saliency_share: if all_zero { 0.0 } else { w / total_w },
                    area_share: n as f64 / total_px as f64,
                },
            )
        })
        .collect();
    Ok(RegionShares { parts, all_zero })
}

/// Map `t` in `[0, 1]` to a black-red-yellow-white heat color.
pub fn heat_color(t: f64) -> Rgb {
    let t = t.clamp(0.0, 1.0);
    [
        (3.0 * t).min(1.0),
        (3.0 * t - 1.0).clamp(0.0, 1.0),
        (3.0 * t - 2.0).clamp(0.0, 1.0),
    ]
}

pub const OVERLAY_ALPHA: f64 = 0.5;

/// Heat map of `weights` (scaled by its maximum and quantized to 8 bits)
/// alpha-blended at 0.5 over the color image, as a binary PPM.
pub fn overlay_ppm(img: &ProjectedImages, weights: &[f64]) -> Result<Vec<u8>, SaliencyError> {
    if weights.len() != img.height * img.width {
        return Err(SaliencyError::ShapeMismatch);
    }
    let top = weights.iter().cloned().fold(0.0, f64::max);
    let pixels: Vec<Rgb> = weights
        .iter()
        .zip(&img.color)
        .map(|(&w, c)| {
            let level = if top > 0.0 { (w / top * 255.0).round() / 255.0 } else { 0.0 };
            let heat = heat_color(level);
            std::array::from_fn(|k| (1.0 - OVERLAY_ALPHA) * c[k] + OVERLAY_ALPHA * heat[k])
        })
        .collect();
    Ok(rgb_ppm(img.width, img.height, &pixels))
}
