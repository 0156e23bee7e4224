//! Synthetic operating-room personnel.
//!
//! Identity lives in the geometry (height, bone proportions, gait). The
//! appearance channel is either standardized (everyone in the same scrubs) or
//! confounded, where shoes and an eyewear band carry an identity-specific,
//! highly saturated color. Geometry and color draw from separate random
//! streams, so the two modes produce identical point positions for the same
//! seeds.

pub mod skeleton;

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{DatasetManifest, ManifestEntry, PersonFrame, PersonSequence, Rgb};
use crate::rng;
use skeleton::{
    Body, Capsule, BILATERAL, CAPSULE_BONE, DENSITY, HEAD, L_SHIN_FOOT, NUM_BONES, NUM_CAPSULES,
    R_SHIN_FOOT,
};

pub const HEIGHT_RANGE: (f64, f64) = (1.55, 1.95);
pub const CADENCE_RANGE: (f64, f64) = (0.7, 1.3);
pub const STRIDE_RANGE: (f64, f64) = (0.3, 0.8);
pub const ARM_SWING_RANGE: (f64, f64) = (0.1, 0.6);
pub const LIMB_SCALE_RANGE: (f64, f64) = (0.88, 1.12);
/// Half-width of the left/right scale split; keeps the pair within 3%.
pub const BILATERAL_SPLIT: f64 = 0.014;
pub const POINTS_PER_FRAME: usize = 2048;
pub const SCRUB_COLOR: Rgb = [0.35, 0.55, 0.65];
pub const COLOR_NOISE_SD: f64 = 0.02;
pub const ACCENT_SATURATION: f64 = 0.9;
pub const ACCENT_VALUE: f64 = 0.9;
/// Fraction of the head capsule's vertical extent covered by eyewear.
pub const EYEWEAR_BAND: (f64, f64) = (0.5, 0.68);
/// Relative jitter of the cadence between sequences of one identity.
pub const CADENCE_JITTER: f64 = 0.03;

const GOLDEN_FRACTION: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid argument: {0}")]
    InvalidArg(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, PartialOrd, Ord, Hash)]
#[serde(rename_all = "lowercase")]
pub enum ModeTag {
    Confounded,
    Standardized,
}

impl ModeTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ModeTag::Confounded => "confounded",
            ModeTag::Standardized => "standardized",
        }
    }
}

impl std::fmt::Display for ModeTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenMode {
    pub tag: ModeTag,
    pub noise_sd_m: f64,
}

/// Base colors used in confounded mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttirePalette {
    pub parts: [Rgb; NUM_BONES],
    pub eyewear: Rgb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityParams {
    pub id_index: u64,
    pub height_m: f64,
    pub limb_scale: [f64; NUM_BONES],
    pub cadence_hz: f64,
    pub stride_amp_rad: f64,
    pub arm_swing_rad: f64,
    pub phase_rad: f64,
    pub attire_palette: AttirePalette,
}

impl IdentityParams {
    pub fn identity_id(&self) -> String {
        format!("P{:02}", self.id_index)
    }
}

/// Number of equal hue sectors accent colors are snapped to.
pub const ACCENT_HUE_SECTORS: u64 = 15;

/// Hue in `[0, 1)` assigned to an identity's accent color: the golden-ratio
/// sequence, snapped to the center of one of [`ACCENT_HUE_SECTORS`] sectors
/// so small color noise never moves an accent across a sector boundary.
pub fn accent_hue(id_index: u64) -> f64 {
    let raw = (id_index as f64 * GOLDEN_FRACTION).fract();
    let sector = ((raw * ACCENT_HUE_SECTORS as f64) as u64).min(ACCENT_HUE_SECTORS - 1);
    (sector as f64 + 0.5) / ACCENT_HUE_SECTORS as f64
}

/// HSV to RGB with all components in `[0, 1]`.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> Rgb {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let c = v * s;
    let x = c * (1.0 - ((h6 % 2.0) - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match h6 as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [r + m, g + m, b + m]
}

pub fn accent_color(id_index: u64) -> Rgb {
    hsv_to_rgb(accent_hue(id_index), ACCENT_SATURATION, ACCENT_VALUE)
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Draw the parameters of identity `id_index`; a pure function of its inputs.
pub fn sample_identity(seed: u64, id_index: u64) -> IdentityParams {
    let mut r = rng::stream(seed, "identity", &[id_index]);
    let height_m = uniform(&mut r, HEIGHT_RANGE);
    let mut limb_scale = [0.0; NUM_BONES];
    for s in limb_scale.iter_mut() {
        *s = uniform(&mut r, LIMB_SCALE_RANGE);
    }
    for (left, right) in BILATERAL {
        let base = limb_scale[left];
        let split = uniform(&mut r, (-BILATERAL_SPLIT, BILATERAL_SPLIT));
        limb_scale[left] = base * (1.0 + split);
        limb_scale[right] = base * (1.0 - split);
    }
    let cadence_hz = uniform(&mut r, CADENCE_RANGE);
    let stride_amp_rad = uniform(&mut r, STRIDE_RANGE);
    let arm_swing_rad = uniform(&mut r, ARM_SWING_RANGE);
    let phase_rad = uniform(&mut r, (0.0, TAU));

    let accent = accent_color(id_index);
    let mut parts = [SCRUB_COLOR; NUM_BONES];
    parts[L_SHIN_FOOT] = accent;
    parts[R_SHIN_FOOT] = accent;
    IdentityParams {
        id_index,
        height_m,
        limb_scale,
        cadence_hz,
        stride_amp_rad,
        arm_swing_rad,
        phase_rad,
        attire_palette: AttirePalette {
            parts,
            eyewear: accent,
        },
    }
}

/// Split `total` points across capsules in proportion to density-weighted
/// area, using largest remainders so the counts always add up.
fn allocate(caps: &[Capsule; NUM_CAPSULES], total: usize) -> [usize; NUM_CAPSULES] {
    let areas: Vec<f64> = caps.iter().zip(DENSITY).map(|(c, d)| c.area() * d).collect();
    let sum: f64 = areas.iter().sum();
    let mut counts = [0usize; NUM_CAPSULES];
    let mut rema: Vec<(f64, usize)> = Vec::with_capacity(NUM_CAPSULES);
    let mut used = 0;
    for (b, a) in areas.iter().enumerate() {
        let exact = a / sum * total as f64;
        counts[b] = exact.floor() as usize;
        used += counts[b];
        rema.push((exact - exact.floor(), b));
    }
    rema.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    for &(_, b) in rema.iter().take(total - used) {
        counts[b] += 1;
    }
    counts
}

fn orthonormal(axis: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let helper = if axis[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let cross = |a: [f64; 3], b: [f64; 3]| {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    };
    let normalize = |v: [f64; 3]| {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        [v[0] / n, v[1] / n, v[2] / n]
    };
    let e1 = normalize(cross(axis, helper));
    let e2 = cross(axis, e1);
    (e1, e2)
}

/// Uniform sample on a capsule surface.
fn sample_capsule(c: &Capsule, r: &mut ChaCha8Rng) -> [f64; 3] {
    let len = c.length();
    let axis = if len > 0.0 {
        [
            (c.b[0] - c.a[0]) / len,
            (c.b[1] - c.a[1]) / len,
            (c.b[2] - c.a[2]) / len,
        ]
    } else {
        [0.0, 1.0, 0.0]
    };
    let side = 2.0 * PI * c.radius * len;
    let caps = 4.0 * PI * c.radius * c.radius;
    let pick: f64 = r.random();
    if pick * (side + caps) < side {
        let (e1, e2) = orthonormal(axis);
        let t: f64 = r.random();
        let (s, co) = (TAU * r.random::<f64>()).sin_cos();
        std::array::from_fn(|i| c.a[i] + t * len * axis[i] + c.radius * (co * e1[i] + s * e2[i]))
    } else {
        // Uniform direction on the sphere; its sign along the axis picks the end.
        let d: [f64; 3] = loop {
            let v: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(r));
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if n > 1e-12 {
                break [v[0] / n, v[1] / n, v[2] / n];
            }
        };
        let along = d[0] * axis[0] + d[1] * axis[1] + d[2] * axis[2];
        let center = if along >= 0.0 { c.b } else { c.a };
        std::array::from_fn(|i| center[i] + c.radius * d[i])
    }
}

fn clamp_unit(c: f64) -> f64 {
    c.clamp(0.0, 1.0)
}

/// Per-sequence nuisance parameters: gait phase offset, heading and position.
struct SequenceJitter {
    phase: f64,
    yaw: f64,
    offset: [f64; 2],
    cadence_scale: f64,
}

impl SequenceJitter {
    fn draw(seq_seed: u64) -> Self {
        let mut r = rng::stream(seq_seed, "sequence", &[]);
        Self {
            phase: uniform(&mut r, (0.0, TAU)),
            yaw: uniform(&mut r, (0.0, TAU)),
            offset: [uniform(&mut r, (-2.0, 2.0)), uniform(&mut r, (-2.0, 2.0))],
            cadence_scale: 1.0 + uniform(&mut r, (-CADENCE_JITTER, CADENCE_JITTER)),
        }
    }
}

/// Render one walking sequence of `params` as point clouds.
pub fn generate_sequence(
    params: &IdentityParams,
    mode: GenMode,
    n_frames: usize,
    fps: f64,
    seq_seed: u64,
) -> Result<PersonSequence, SynthError> {
    if n_frames < 2 {
        return Err(SynthError::InvalidArg(format!(
            "n_frames must be at least 2, got {n_frames}"
        )));
    }
    if !(fps.is_finite() && fps > 0.0) {
        return Err(SynthError::InvalidArg(format!("fps must be positive, got {fps}")));
    }
    if !(mode.noise_sd_m.is_finite() && mode.noise_sd_m >= 0.0) {
        return Err(SynthError::InvalidArg(format!(
            "noise_sd_m must be non-negative, got {}",
            mode.noise_sd_m
        )));
    }
    let body = Body::new(params);
    let jitter = SequenceJitter::draw(seq_seed);
    let (sin_yaw, cos_yaw) = jitter.yaw.sin_cos();
    let pos_noise = Normal::new(0.0, mode.noise_sd_m).expect("checked sd");
    let color_noise = Normal::new(0.0, COLOR_NOISE_SD).expect("constant sd");
    let cadence = params.cadence_hz * jitter.cadence_scale;

    let mut frames = Vec::with_capacity(n_frames);
    for k in 0..n_frames {
        let t = k as f64 / fps;
        let phi = TAU * cadence * t + params.phase_rad + jitter.phase;
        let caps = body.pose(params, phi);
        let counts = allocate(&caps, POINTS_PER_FRAME);
        let head = &caps[HEAD];
        let head_lo = head.a[1].min(head.b[1]) - head.radius;
        let head_hi = head.a[1].max(head.b[1]) + head.radius;

        let mut geo = rng::stream(seq_seed, "geometry", &[k as u64]);
        let mut col = rng::stream(seq_seed, "color", &[k as u64]);
        let mut points = Vec::with_capacity(POINTS_PER_FRAME);
        let mut colors = Vec::with_capacity(POINTS_PER_FRAME);
        let mut labels = Vec::with_capacity(POINTS_PER_FRAME);
        for (ci, cap) in caps.iter().enumerate() {
            let bone = CAPSULE_BONE[ci];
            for _ in 0..counts[ci] {
                let p = sample_capsule(cap, &mut geo);
                let base = match mode.tag {
                    ModeTag::Standardized => SCRUB_COLOR,
                    ModeTag::Confounded => {
                        let frac = (p[1] - head_lo) / (head_hi - head_lo);
                        if bone == HEAD && (EYEWEAR_BAND.0..=EYEWEAR_BAND.1).contains(&frac) {
                            params.attire_palette.eyewear
                        } else {
                            params.attire_palette.parts[bone]
                        }
                    }
                };
                let noisy: [f64; 3] =
                    std::array::from_fn(|i| p[i] + pos_noise.sample(&mut geo));
                // Heading and position in the room.
                let (x, z) = (noisy[0], noisy[2]);
                points.push([
                    cos_yaw * x + sin_yaw * z + jitter.offset[0],
                    noisy[1],
                    -sin_yaw * x + cos_yaw * z + jitter.offset[1],
                ]);
                colors.push(std::array::from_fn(|i| {
                    clamp_unit(base[i] + color_noise.sample(&mut col))
                }));
                labels.push(bone as i32);
            }
        }
        frames.push(PersonFrame {
            points,
            colors: Some(colors),
            part_labels: Some(labels),
            timestamp_s: t,
        });
    }
    Ok(PersonSequence {
        frames,
        identity_id: params.identity_id(),
        surgery_id: "S00".into(),
        sequence_id: format!("{}_{seq_seed:016x}", params.identity_id()),
        fps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n_identities: usize,
    pub n_surgeries: usize,
    pub seqs_per_surgery: usize,
    pub n_frames: usize,
    pub fps: f64,
}

pub fn surgery_id(index: usize) -> String {
    format!("S{:02}", index + 1)
}

pub fn sequence_seed(seed: u64, surgery: usize, identity: usize, k: usize) -> u64 {
    rng::derive(seed, "sequence-seed", &[surgery as u64, identity as u64, k as u64])
}

/// One sequence of a synthetic dataset, before its points are generated.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedSequence {
    pub entry: ManifestEntry,
    pub identity: usize,
    pub surgery: usize,
    pub seq_seed: u64,
}

/// Manifest entries of a synthetic dataset in surgery, identity, repeat
/// order. Manifest paths are `<mode>/<sequence_id>` relative to the dataset
/// root.
pub fn plan_dataset(spec: &DatasetSpec, mode: ModeTag, seed: u64) -> Result<Vec<PlannedSequence>, SynthError> {
    if spec.n_identities == 0 || spec.n_surgeries == 0 || spec.seqs_per_surgery == 0 {
        return Err(SynthError::InvalidArg("all counts must be at least 1".into()));
    }
    let mut plan = Vec::with_capacity(spec.n_surgeries * spec.n_identities * spec.seqs_per_surgery);
    for s in 0..spec.n_surgeries {
        for i in 0..spec.n_identities {
            for k in 0..spec.seqs_per_surgery {
                let surgery = surgery_id(s);
                let identity = format!("P{i:02}");
                let sequence_id = format!("{surgery}_{identity}_{k:02}");
                plan.push(PlannedSequence {
                    entry: ManifestEntry {
                        file_path: format!("{mode}/{sequence_id}"),
                        sequence_id,
                        identity_id: identity,
                        surgery_id: surgery,
                        fps: spec.fps,
                    },
                    identity: i,
                    surgery: s,
                    seq_seed: sequence_seed(seed, s, i, k),
                });
            }
        }
    }
    Ok(plan)
}

/// Generate the points of one planned sequence.
pub fn generate_planned(
    planned: &PlannedSequence,
    spec: &DatasetSpec,
    mode: GenMode,
    seed: u64,
) -> Result<PersonSequence, SynthError> {
    let params = sample_identity(seed, planned.identity as u64);
    let mut seq = generate_sequence(&params, mode, spec.n_frames, spec.fps, planned.seq_seed)?;
    seq.surgery_id = planned.entry.surgery_id.clone();
    seq.sequence_id = planned.entry.sequence_id.clone();
    Ok(seq)
}

/// Every identity walks `seqs_per_surgery` times in every surgery.
pub fn make_dataset(
    spec: &DatasetSpec,
    mode: GenMode,
    seed: u64,
) -> Result<(DatasetManifest, Vec<PersonSequence>), SynthError> {
    let plan = plan_dataset(spec, mode.tag, seed)?;
    let sequences = plan
        .iter()
        .map(|p| generate_planned(p, spec, mode, seed))
        .collect::<Result<Vec<_>, _>>()?;
    let entries = plan.into_iter().map(|p| p.entry).collect();
    Ok((DatasetManifest::new(mode.tag.as_str(), entries), sequences))
}
