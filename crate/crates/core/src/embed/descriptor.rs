//! Fixed-length sequence descriptors computed from projected images.
//!
//! The geometric descriptor reads only the silhouette mask and the depth
//! image; the appearance descriptor reads only the color image. Both are
//! temporal aggregates, so one vector describes a whole sequence.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::dual::Dual3;
use crate::geom::percentile;
use crate::render::ProjectedImages;

pub const GEOMETRIC_DIM: usize = 16;
pub const APPEARANCE_DIM: usize = 48;
pub const DEPTH_BANDS: usize = 8;
/// Index of the first depth-profile band mean in the geometric descriptor.
pub const DEPTH_BAND_OFFSET: usize = 8;
pub const HUE_BINS: usize = 16;
/// Chromatic bins; bin 0 holds achromatic pixels.
pub const CHROMATIC_BINS: usize = HUE_BINS - 1;
/// Pixels with HSV saturation below this are achromatic.
pub const ACHROMATIC_SATURATION: f64 = 0.15;
/// Width of the soft saturation gate used on the differentiable path.
pub const SATURATION_GATE_WIDTH: f64 = 0.02;
/// Temperature of the soft hue binning, in hue-fraction units.
pub const SOFT_TAU: f64 = 0.05;

/// Shoulder band as fractions of the frame height.
pub const SHOULDER_BAND: (f64, f64) = (0.75, 0.85);
pub const HIP_BAND: (f64, f64) = (0.45, 0.55);
/// Gait-frequency search window in Hz; lags run from `fps/1.5` to `fps/0.5`.
pub const GAIT_HZ_RANGE: (f64, f64) = (0.5, 1.5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptorKind {
    Geometric,
    Appearance,
}

impl DescriptorKind {
    pub fn dim(self) -> usize {
        match self {
            DescriptorKind::Geometric => GEOMETRIC_DIM,
            DescriptorKind::Appearance => APPEARANCE_DIM,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DescriptorKind::Geometric => "geometric",
            DescriptorKind::Appearance => "appearance",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "geometric" => Some(DescriptorKind::Geometric),
            "appearance" => Some(DescriptorKind::Appearance),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub kind: DescriptorKind,
    pub values: Vec<f64>,
}

impl Descriptor {
    pub fn new(kind: DescriptorKind, values: Vec<f64>) -> Result<Self, DescriptorError> {
        if values.len() != kind.dim() {
            return Err(DescriptorError::Length {
                kind,
                expected: kind.dim(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DescriptorError::NonFinite(i));
        }
        Ok(Self { kind, values })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DescriptorError {
    #[error("need at least {needed} frames, got {got}")]
    TooFewFrames { needed: usize, got: usize },
    #[error("no frame carries color data")]
    NoColorData,
    #[error("fps must be positive, got {0}")]
    BadFps(f64),
    #[error("{kind:?} descriptor needs {expected} values, got {got}")]
    Length {
        kind: DescriptorKind,
        expected: usize,
        got: usize,
    },
    #[error("descriptor value {0} is not finite")]
    NonFinite(usize),
}

/// Per-frame height estimate: center height of the topmost silhouette row.
fn frame_height(img: &ProjectedImages, first_row: usize) -> f64 {
    img.row_height_m(first_row)
}

fn row_extent_m(img: &ProjectedImages, r: usize) -> Option<f64> {
    let (a, b) = img.row_extent(r)?;
    Some((b - a + 1) as f64 * img.pixel_size_m().1)
}

/// Horizontal extent of the whole silhouette in meters.
fn silhouette_width_m(img: &ProjectedImages) -> f64 {
    let (mut lo, mut hi) = (usize::MAX, 0);
    for r in 0..img.height {
        if let Some((a, b)) = img.row_extent(r) {
            lo = lo.min(a);
            hi = hi.max(b);
        }
    }
    if lo > hi {
        return 0.0;
    }
    (hi - lo + 1) as f64 * img.pixel_size_m().1
}

/// Spread (5th to 95th percentile) of depth over the lower half of the
/// silhouette. Leg swing shows up here when the normalized view faces the
/// walker, where the silhouette width barely moves.
fn leg_depth_extent_m(img: &ProjectedImages) -> f64 {
    let Some((first, last)) = img.row_span() else {
        return 0.0;
    };
    let mid = first + (last - first).div_ceil(2);
    let depths: Vec<f64> = (mid..=last)
        .flat_map(|r| (0..img.width).map(move |c| r * img.width + c))
        .filter(|&i| img.mask[i])
        .map(|i| img.depth[i])
        .collect();
    if depths.is_empty() {
        return 0.0;
    }
    percentile(&depths, 0.95) - percentile(&depths, 0.05)
}

/// Row indices of depth band `b` for a silhouette spanning `first..=last`.
fn depth_band_rows(first: usize, last: usize, b: usize) -> std::ops::Range<usize> {
    let n = last - first + 1;
    (first + b * n / DEPTH_BANDS)..(first + (b + 1) * n / DEPTH_BANDS)
}

/// Dominant period of `signal` by biased autocorrelation, as a frequency.
///
/// Lags `ceil(fps/1.5) ..= min(floor(fps/0.5), n-2)` are searched and the
/// lag with the largest autocorrelation wins (ties go to the shorter lag).
/// A constant signal, an empty lag window or a non-positive peak all report
/// 0 Hz.
pub fn autocorrelation_frequency(signal: &[f64], fps: f64) -> f64 {
    let n = signal.len();
    if n < 3 {
        return 0.0;
    }
    let mean = signal.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = signal.iter().map(|v| v - mean).collect();
    let energy: f64 = centered.iter().map(|v| v * v).sum();
    if energy <= 1e-12 * (1.0 + mean * mean) * n as f64 {
        return 0.0;
    }
    let lo = (fps / GAIT_HZ_RANGE.1).ceil().max(1.0) as usize;
    let hi = ((fps / GAIT_HZ_RANGE.0).floor() as usize).min(n - 2);
    let mut best: Option<(usize, f64)> = None;
    for lag in lo..=hi {
        let r: f64 = (0..n - lag)
            .map(|t| centered[t] * centered[t + lag])
            .sum::<f64>()
            / energy;
        if best.is_none_or(|(_, br)| r > br) {
            best = Some((lag, r));
        }
    }
    match best {
        Some((lag, r)) if r > 0.0 => fps / lag as f64,
        _ => 0.0,
    }
}

/// 16-dim shape and gait summary of a rendered sequence.
///
/// Layout: height p99 and p50 (m), shoulder and hip width proxies (m), mean
/// and max silhouette area (m^2), gait frequency (Hz), stride proxy (m), then
/// mean depth (m) of 8 equal vertical bands of the silhouette, top to bottom.
///
/// The gait frequency is read from the silhouette width plus the depth spread
/// of the legs, so it is found whether the normalized view is sagittal or
/// frontal; the stride proxy uses the width alone.
pub fn geometric_descriptor(images: &[ProjectedImages], fps: f64) -> Result<Descriptor, DescriptorError> {
    if images.len() < 2 {
        return Err(DescriptorError::TooFewFrames {
            needed: 2,
            got: images.len(),
        });
    }
    if !(fps.is_finite() && fps > 0.0) {
        return Err(DescriptorError::BadFps(fps));
    }
    let mut heights = Vec::with_capacity(images.len());
    let mut shoulders = Vec::new();
    let mut hips = Vec::new();
    let mut areas = Vec::with_capacity(images.len());
    let mut widths = Vec::with_capacity(images.len());
    let mut gait = Vec::with_capacity(images.len());
    let mut band_sum = [0.0; DEPTH_BANDS];
    let mut band_frames = [0usize; DEPTH_BANDS];

    for img in images {
        let (ph, pw) = img.pixel_size_m();
        areas.push(img.valid_count() as f64 * ph * pw);
        let width = silhouette_width_m(img);
        widths.push(width);
        gait.push(width + leg_depth_extent_m(img));
        let Some((first, last)) = img.row_span() else {
            continue;
        };
        let h = frame_height(img, first);
        heights.push(h);
        for r in first..=last {
            let frac = img.row_height_m(r) / h;
            let Some(ext) = row_extent_m(img, r) else {
                continue;
            };
            if (SHOULDER_BAND.0..=SHOULDER_BAND.1).contains(&frac) {
                shoulders.push(ext);
            }
            if (HIP_BAND.0..=HIP_BAND.1).contains(&frac) {
                hips.push(ext);
            }
        }
        for (b, (sum, count)) in band_sum.iter_mut().zip(band_frames.iter_mut()).enumerate() {
            let (mut s, mut c) = (0.0, 0usize);
            for r in depth_band_rows(first, last, b) {
                for col in 0..img.width {
                    let i = r * img.width + col;
                    if img.mask[i] {
                        s += img.depth[i];
                        c += 1;
                    }
                }
            }
            if c > 0 {
                *sum += s / c as f64;
                *count += 1;
            }
        }
    }

    let p = |v: &[f64], q: f64| if v.is_empty() { 0.0 } else { percentile(v, q) };
    let mut values = Vec::with_capacity(GEOMETRIC_DIM);
    values.push(p(&heights, 0.99));
    values.push(p(&heights, 0.5));
    values.push(p(&shoulders, 0.95));
    values.push(p(&hips, 0.95));
    values.push(areas.iter().sum::<f64>() / areas.len() as f64);
    values.push(areas.iter().cloned().fold(0.0, f64::max));
    values.push(autocorrelation_frequency(&gait, fps));
    values.push(p(&widths, 0.95) - p(&widths, 0.05));
    for b in 0..DEPTH_BANDS {
        values.push(if band_frames[b] > 0 {
            band_sum[b] / band_frames[b] as f64
        } else {
            0.0
        });
    }
    Descriptor::new(DescriptorKind::Geometric, values)
}

/// Weight of every depth pixel in the depth-profile band means.
///
/// Entry `[frame][pixel]` is `Some((band, w))` when the pixel contributes
/// `w * depth` to descriptor value `DEPTH_BAND_OFFSET + band`. The other
/// geometric values depend on the mask only and have zero derivative with
/// respect to depth.
pub fn depth_band_weights(images: &[ProjectedImages]) -> Vec<Vec<Option<(usize, f64)>>> {
    let mut band_frames = [0usize; DEPTH_BANDS];
    let mut per_frame: Vec<Vec<Option<(usize, f64)>>> = Vec::with_capacity(images.len());
    for img in images {
        let mut w = vec![None; img.height * img.width];
        if let Some((first, last)) = img.row_span() {
            for (b, frames) in band_frames.iter_mut().enumerate() {
                let pix: Vec<usize> = depth_band_rows(first, last, b)
                    .flat_map(|r| (0..img.width).map(move |c| r * img.width + c))
                    .filter(|&i| img.mask[i])
                    .collect();
                if pix.is_empty() {
                    continue;
                }
                *frames += 1;
                let share = 1.0 / pix.len() as f64;
                for i in pix {
                    w[i] = Some((b, share));
                }
            }
        }
        per_frame.push(w);
    }
    for w in &mut per_frame {
        for (b, v) in w.iter_mut().flatten() {
            *v /= band_frames[*b] as f64;
        }
    }
    per_frame
}

/// Which appearance band a silhouette row belongs to.
fn appearance_band(first: usize, last: usize, r: usize) -> Option<usize> {
    let n = (last - first + 1) as f64;
    let t = (r - first) as f64 + 0.5;
    if t < 0.15 * n {
        Some(0)
    } else if (0.25 * n..0.75 * n).contains(&t) {
        Some(1)
    } else if t > 0.85 * n {
        Some(2)
    } else {
        None
    }
}

/// Hue fraction in `[0, 1)` and saturation of an RGB color, carrying
/// derivatives with respect to the three channels.
pub(crate) fn hue_saturation(rgb: [Dual3; 3]) -> (Dual3, Dual3) {
    let [r, g, b] = rgb;
    let (mut imax, mut imin) = (0, 0);
    for i in 1..3 {
        if rgb[i].v > rgb[imax].v {
            imax = i;
        }
        if rgb[i].v < rgb[imin].v {
            imin = i;
        }
    }
    let max = rgb[imax];
    let c = max - rgb[imin];
    if c.v <= 1e-12 || max.v <= 1e-12 {
        return (Dual3::constant(0.0), Dual3::constant(0.0));
    }
    let sat = c / max;
    let h6 = match imax {
        0 => (g - b) / c,
        1 => (b - r) / c + 2.0,
        _ => (r - g) / c + 4.0,
    };
    let mut hue = h6 / 6.0;
    if hue.v < 0.0 {
        hue = hue + 1.0;
    }
    if hue.v >= 1.0 {
        hue = hue - 1.0;
    }
    (hue, sat)
}

/// Hard bin of a color: 0 if achromatic, else `1 + floor(hue * 15)`.
pub fn hue_bin(rgb: [f64; 3]) -> usize {
    let (h, s) = hue_saturation(rgb.map(Dual3::constant));
    if s.v < ACHROMATIC_SATURATION {
        0
    } else {
        1 + ((h.v * CHROMATIC_BINS as f64) as usize).min(CHROMATIC_BINS - 1)
    }
}

fn circular_distance(a: Dual3, center: f64) -> Dual3 {
    let d = a - center;
    if d.v > 0.5 {
        d - 1.0
    } else if d.v < -0.5 {
        d + 1.0
    } else {
        d
    }
}

/// Soft bin membership (sums to one) with derivatives: a sigmoid gate on
/// saturation splits mass between the achromatic bin and a Gaussian-kernel
/// softmax over the chromatic bin centers.
pub(crate) fn soft_bins(rgb: [f64; 3], tau: f64) -> [Dual3; HUE_BINS] {
    let (h, s) = hue_saturation(Dual3::variables(rgb));
    let gate = ((s - ACHROMATIC_SATURATION) / SATURATION_GATE_WIDTH).sigmoid();
    let logits: Vec<Dual3> = (0..CHROMATIC_BINS)
        .map(|k| {
            let d = circular_distance(h, (k as f64 + 0.5) / CHROMATIC_BINS as f64);
            d * d * (-0.5 / (tau * tau))
        })
        .collect();
    let top = logits.iter().map(|l| l.v).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<Dual3> = logits.iter().map(|l| (*l - top).exp()).collect();
    let total = exps.iter().fold(Dual3::constant(0.0), |a, e| a + *e);
    let mut out = [Dual3::constant(0.0); HUE_BINS];
    out[0] = Dual3::constant(1.0) - gate;
    for k in 0..CHROMATIC_BINS {
        out[k + 1] = gate * exps[k] / total;
    }
    out
}

/// Valid, colored pixels of each band for one frame.
fn band_pixels(img: &ProjectedImages) -> [Vec<usize>; 3] {
    let mut bands: [Vec<usize>; 3] = Default::default();
    if let Some((first, last)) = img.row_span() {
        for r in first..=last {
            if let Some(b) = appearance_band(first, last, r) {
                for c in 0..img.width {
                    let i = r * img.width + c;
                    if img.mask[i] {
                        bands[b].push(i);
                    }
                }
            }
        }
    }
    bands
}

/// How the appearance histograms assign pixels to bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "binning", rename_all = "lowercase")]
pub enum Binning {
    Hard,
    Soft { tau: f64 },
}

/// Per-band histogram accumulation shared by the hard and soft paths.
/// `each(frame, band, pixel, scale)` is invoked with the factor that pixel
/// carries into the final, frame-averaged histogram of its band.
fn accumulate_bands(
    images: &[ProjectedImages],
    mut each: impl FnMut(usize, usize, usize, f64),
) -> Result<(), DescriptorError> {
    let colored: Vec<usize> = (0..images.len()).filter(|&f| images[f].has_color).collect();
    if colored.is_empty() {
        return Err(DescriptorError::NoColorData);
    }
    let bands: Vec<[Vec<usize>; 3]> = colored.iter().map(|&f| band_pixels(&images[f])).collect();
    for band in 0..3 {
        let frames = bands.iter().filter(|b| !b[band].is_empty()).count();
        for (k, &f) in colored.iter().enumerate() {
            let pix = &bands[k][band];
            if pix.is_empty() {
                continue;
            }
            let scale = 1.0 / (frames as f64 * pix.len() as f64);
            for &i in pix {
                each(f, band, i, scale);
            }
        }
    }
    Ok(())
}

/// 48-dim color summary: 16-bin hue histograms of the head (top 15% of the
/// silhouette rows), torso (middle 50%) and feet (bottom 15%) bands,
/// averaged over colored frames and L1-normalized per band.
pub fn appearance_descriptor(images: &[ProjectedImages]) -> Result<Descriptor, DescriptorError> {
    appearance_descriptor_with(images, Binning::Hard)
}

pub fn appearance_descriptor_with(
    images: &[ProjectedImages],
    binning: Binning,
) -> Result<Descriptor, DescriptorError> {
    let mut values = vec![0.0; APPEARANCE_DIM];
    accumulate_bands(images, |f, band, i, scale| {
        let rgb = images[f].color[i];
        match binning {
            Binning::Hard => values[band * HUE_BINS + hue_bin(rgb)] += scale,
            Binning::Soft { tau } => {
                for (k, m) in soft_bins(rgb, tau).iter().enumerate() {
                    values[band * HUE_BINS + k] += scale * m.v;
                }
            }
        }
    })?;
    for band in values.chunks_mut(HUE_BINS) {
        let total: f64 = band.iter().sum();
        if total > 0.0 {
            band.iter_mut().for_each(|v| *v /= total);
        }
    }
    Descriptor::new(DescriptorKind::Appearance, values)
}

/// Pull a descriptor-space gradient `upstream` back onto the color pixels
/// through the soft-binned appearance descriptor. Returns, per frame, the
/// gradient with respect to each pixel's RGB values (zero off-silhouette).
///
/// The soft histograms already sum to one per band, so the final L1
/// normalization is the identity there and contributes no extra term.
pub fn soft_appearance_vjp(
    images: &[ProjectedImages],
    tau: f64,
    upstream: &[f64],
) -> Result<Vec<Vec<[f64; 3]>>, DescriptorError> {
    if upstream.len() != APPEARANCE_DIM {
        return Err(DescriptorError::Length {
            kind: DescriptorKind::Appearance,
            expected: APPEARANCE_DIM,
            got: upstream.len(),
        });
    }
    let mut grads: Vec<Vec<[f64; 3]>> = images
        .iter()
        .map(|img| vec![[0.0; 3]; img.height * img.width])
        .collect();
    accumulate_bands(images, |f, band, i, scale| {
        let bins = soft_bins(images[f].color[i], tau);
        let g = &mut grads[f][i];
        for (k, m) in bins.iter().enumerate() {
            let u = upstream[band * HUE_BINS + k] * scale;
            for (gc, dc) in g.iter_mut().zip(&m.d) {
                *gc += u * dc;
            }
        }
    })?;
    Ok(grads)
}
