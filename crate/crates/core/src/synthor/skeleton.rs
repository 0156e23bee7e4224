//! Capsule skeleton of a walking person.
//!
//! Local frame: `x` lateral (left positive), `y` up, `z` walking direction.
//! Legs and arms swing in the sagittal plane with sinusoidal angles, and the
//! whole body is lowered so the lower foot touches the floor.

use std::f64::consts::PI;

use super::IdentityParams;

pub const NUM_BONES: usize = 11;

pub const PELVIS: usize = 0;
pub const SPINE: usize = 1;
pub const HEAD: usize = 2;
pub const L_UPPER_ARM: usize = 3;
pub const R_UPPER_ARM: usize = 4;
pub const L_FOREARM: usize = 5;
pub const R_FOREARM: usize = 6;
pub const L_THIGH: usize = 7;
pub const R_THIGH: usize = 8;
pub const L_SHIN_FOOT: usize = 9;
pub const R_SHIN_FOOT: usize = 10;

pub const BONE_NAMES: [&str; NUM_BONES] = [
    "pelvis",
    "spine",
    "head",
    "l_upper_arm",
    "r_upper_arm",
    "l_forearm",
    "r_forearm",
    "l_thigh",
    "r_thigh",
    "l_shin_foot",
    "r_shin_foot",
];

/// Bilateral pairs as (left, right).
pub const BILATERAL: [(usize, usize); 4] = [
    (L_UPPER_ARM, R_UPPER_ARM),
    (L_FOREARM, R_FOREARM),
    (L_THIGH, R_THIGH),
    (L_SHIN_FOOT, R_SHIN_FOOT),
];

// Proportions as fractions of standing height at unit bone scale.
const SHIN_LEN: f64 = 0.255;
const THIGH_LEN: f64 = 0.245;
const PELVIS_LEN: f64 = 0.09;
const SPINE_LEN: f64 = 0.19;
const HEAD_LEN: f64 = 0.08;
const UPPER_ARM_LEN: f64 = 0.175;
const FOREARM_LEN: f64 = 0.2;
const SHOULDER_HALF: f64 = 0.115;
const HIP_HALF: f64 = 0.05;
const NECK_GAP: f64 = 0.03;
const FOOT_BACK: f64 = 0.02;
const FOOT_FWD: f64 = 0.085;
const FOOT_RADIUS: f64 = 0.02;

/// Capsules per pose: one per bone plus a foot on each shin.
pub const NUM_CAPSULES: usize = NUM_BONES + 2;
pub const L_FOOT_CAPSULE: usize = NUM_BONES;
pub const R_FOOT_CAPSULE: usize = NUM_BONES + 1;

/// Bone (part label) owning each capsule.
pub const CAPSULE_BONE: [usize; NUM_CAPSULES] = [
    PELVIS,
    SPINE,
    HEAD,
    L_UPPER_ARM,
    R_UPPER_ARM,
    L_FOREARM,
    R_FOREARM,
    L_THIGH,
    R_THIGH,
    L_SHIN_FOOT,
    R_SHIN_FOOT,
    L_SHIN_FOOT,
    R_SHIN_FOOT,
];

/// Relative surface sampling density per capsule. The head and feet are
/// sampled more densely so the extremes of the height distribution are well
/// populated, as they are for a real body scan with a round skull and flat
/// soles.
pub const DENSITY: [f64; NUM_CAPSULES] = [
    1.0, 1.0, 3.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0,
];

const RADIUS: [f64; NUM_BONES] = [
    0.075, 0.08, 0.058, 0.026, 0.026, 0.021, 0.021, 0.042, 0.042, 0.03, 0.03,
];

/// Elbow flexion added to the upper-arm angle.
const ELBOW_BEND: f64 = 0.2;
/// Knee flexion gain during the forward swing, relative to the hip amplitude.
const KNEE_GAIN: f64 = 1.0;

#[derive(Debug, Clone, Copy)]
pub struct Capsule {
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub radius: f64,
}

impl Capsule {
    pub fn length(&self) -> f64 {
        dist(self.a, self.b)
    }

    pub fn area(&self) -> f64 {
        2.0 * PI * self.radius * self.length() + 4.0 * PI * self.radius * self.radius
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Unit vector pointing down, swung forward by `angle` radians.
fn down(angle: f64) -> [f64; 3] {
    [0.0, -angle.cos(), angle.sin()]
}

fn add(p: [f64; 3], d: [f64; 3], s: f64) -> [f64; 3] {
    [p[0] + d[0] * s, p[1] + d[1] * s, p[2] + d[2] * s]
}

/// Metric segment lengths, radii and offsets for one identity.
#[derive(Debug, Clone)]
pub struct Body {
    len: [f64; NUM_BONES],
    radius: [f64; NUM_BONES],
    shoulder_half: f64,
    hip_half: f64,
    hip_y: f64,
    neck_gap: f64,
    foot: [f64; 3],
}

impl Body {
    pub fn new(p: &IdentityParams) -> Self {
        let s = &p.limb_scale;
        let mut len = [0.0; NUM_BONES];
        len[PELVIS] = PELVIS_LEN * s[PELVIS];
        len[SPINE] = SPINE_LEN * s[SPINE];
        len[HEAD] = HEAD_LEN * s[HEAD];
        for (l, r) in BILATERAL {
            let base = match l {
                L_UPPER_ARM => UPPER_ARM_LEN,
                L_FOREARM => FOREARM_LEN,
                L_THIGH => THIGH_LEN,
                _ => SHIN_LEN,
            };
            len[l] = base * s[l];
            len[r] = base * s[r];
        }
        let mut radius = [0.0; NUM_BONES];
        for b in 0..NUM_BONES {
            radius[b] = RADIUS[b] * s[b];
        }
        let mut foot = [
            FOOT_BACK * s[L_SHIN_FOOT].min(s[R_SHIN_FOOT]),
            FOOT_FWD * s[L_SHIN_FOOT].min(s[R_SHIN_FOOT]),
            FOOT_RADIUS,
        ];
        let leg = |thigh: usize, shin: usize| foot[2] + len[shin] + len[thigh];
        // The longer leg carries the weight when standing.
        let hip_y = leg(L_THIGH, L_SHIN_FOOT).max(leg(R_THIGH, R_SHIN_FOOT));
        let top = hip_y + len[PELVIS] + len[SPINE] + NECK_GAP + len[HEAD] + radius[HEAD];

        // Uniform rescale so the standing head top sits exactly at height_m.
        let k = p.height_m / top;
        for b in 0..NUM_BONES {
            len[b] *= k;
            radius[b] *= k;
        }
        for f in &mut foot {
            *f *= k;
        }
        Self {
            len,
            radius,
            shoulder_half: SHOULDER_HALF * s[SPINE] * k,
            hip_half: HIP_HALF * s[PELVIS] * k,
            hip_y: hip_y * k,
            neck_gap: NECK_GAP * k,
            foot,
        }
    }

    /// Capsules at gait phase `phi` (radians).
    pub fn pose(&self, p: &IdentityParams, phi: f64) -> [Capsule; NUM_CAPSULES] {
        let amp = 0.5 * p.stride_amp_rad;
        let (sin, cos) = phi.sin_cos();
        let len = &self.len;
        let rad = &self.radius;

        let hip = [0.0, self.hip_y, 0.0];
        let lumbar = add(hip, [0.0, 1.0, 0.0], len[PELVIS]);
        let neck = add(lumbar, [0.0, 1.0, 0.0], len[SPINE]);
        let head_base = add(neck, [0.0, 1.0, 0.0], self.neck_gap);
        let head_top = add(head_base, [0.0, 1.0, 0.0], len[HEAD]);

        let mut caps = [Capsule {
            a: hip,
            b: hip,
            radius: 0.0,
        }; NUM_CAPSULES];
        caps[PELVIS] = Capsule {
            a: hip,
            b: lumbar,
            radius: rad[PELVIS],
        };
        caps[SPINE] = Capsule {
            a: lumbar,
            b: neck,
            radius: rad[SPINE],
        };
        caps[HEAD] = Capsule {
            a: head_base,
            b: head_top,
            radius: rad[HEAD],
        };

        for (side, sign) in [(0usize, 1.0f64), (1, -1.0)] {
            let thigh_angle = sign * amp * sin;
            // The leg moving forward flexes its knee.
            let knee_flex = KNEE_GAIN * amp * (sign * cos).max(0.0);
            let shin_angle = thigh_angle - knee_flex;
            let arm_angle = -sign * p.arm_swing_rad * sin;

            let hip_joint = [sign * self.hip_half, self.hip_y, 0.0];
            let (thigh, shin) = (L_THIGH + side, L_SHIN_FOOT + side);
            let knee = add(hip_joint, down(thigh_angle), len[thigh]);
            let ankle = add(knee, down(shin_angle), len[shin]);
            caps[thigh] = Capsule {
                a: hip_joint,
                b: knee,
                radius: rad[thigh],
            };
            // Shorten the shin so its rounded end does not dip below the sole.
            let shin_end = len[shin] - (rad[shin] - self.foot[2]).max(0.0);
            caps[shin] = Capsule {
                a: knee,
                b: add(knee, down(shin_angle), shin_end),
                radius: rad[shin],
            };
            // The sole stays perpendicular to the shin, so the stance foot
            // rolls over heel and toes instead of the hips dropping.
            let fwd = [0.0, shin_angle.sin(), shin_angle.cos()];
            caps[L_FOOT_CAPSULE + side] = Capsule {
                a: add(ankle, fwd, -self.foot[0]),
                b: add(ankle, fwd, self.foot[1]),
                radius: self.foot[2],
            };

            let (upper, fore) = (L_UPPER_ARM + side, L_FOREARM + side);
            let shoulder = [sign * self.shoulder_half, neck[1] - rad[upper], 0.0];
            let elbow = add(shoulder, down(arm_angle), len[upper]);
            let hand = add(elbow, down(arm_angle + ELBOW_BEND), len[fore]);
            caps[upper] = Capsule {
                a: shoulder,
                b: elbow,
                radius: rad[upper],
            };
            caps[fore] = Capsule {
                a: elbow,
                b: hand,
                radius: rad[fore],
            };
        }
        // Keep the lower foot on the floor: the body dips as the legs splay.
        let floor = caps
            .iter()
            .map(|c| c.a[1].min(c.b[1]) - c.radius)
            .fold(f64::INFINITY, f64::min);
        let drop = floor.min(self.hip_y);
        for c in &mut caps {
            c.a[1] -= drop;
            c.b[1] -= drop;
        }
        caps
    }
}
