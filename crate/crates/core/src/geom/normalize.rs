use super::PersonFrame;

/// Result of [`normalize_frame`]. `degenerate` is set when every point shares
/// the same horizontal position; such frames are centered and floor-anchored
/// but not rotated.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedFrame {
    pub frame: PersonFrame,
    pub degenerate: bool,
}

/// Percentile with linear interpolation between closest ranks, `q` in `[0, 1]`.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of empty slice");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile_sorted(&v, q)
}

pub(crate) fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

/// Canonicalize a person frame with a rigid transform.
///
/// The horizontal centroid moves to the origin, the 1st percentile of `y`
/// moves to 0, and the frame is yawed so the dominant horizontal spread lies
/// along `+x`. Of the two opposite yaws, the one giving a non-negative sum of
/// `x` over the first half of the points is kept. Distances are never scaled.
pub fn normalize_frame(frame: &PersonFrame) -> NormalizedFrame {
    let n = frame.points.len() as f64;
    let (mut cx, mut cz) = (0.0, 0.0);
    for p in &frame.points {
        cx += p[0];
        cz += p[2];
    }
    cx /= n;
    cz /= n;
    let ys: Vec<f64> = frame.points.iter().map(|p| p[1]).collect();
    let floor = percentile(&ys, 0.01);

    let (mut sxx, mut szz, mut sxz) = (0.0, 0.0, 0.0);
    let mut spread: f64 = 0.0;
    for p in &frame.points {
        let (x, z) = (p[0] - cx, p[2] - cz);
        sxx += x * x;
        szz += z * z;
        sxz += x * z;
        spread = spread.max(x.abs()).max(z.abs());
    }
    let degenerate = spread <= 1e-12;

    let (c, s) = if degenerate {
        (1.0, 0.0)
    } else {
        let theta = 0.5 * (2.0 * sxz).atan2(sxx - szz);
        (theta.cos(), theta.sin())
    };
    let mut points: Vec<[f64; 3]> = frame
        .points
        .iter()
        .map(|p| {
            let (x, z) = (p[0] - cx, p[2] - cz);
            [c * x + s * z, p[1] - floor, -s * x + c * z]
        })
        .collect();

    if !degenerate {
        let half = points.len() / 2;
        let head_sum: f64 = points[..half.max(1)].iter().map(|p| p[0]).sum();
        if head_sum < 0.0 {
            for p in &mut points {
                p[0] = -p[0];
                p[2] = -p[2];
            }
        }
    }

    NormalizedFrame {
        frame: PersonFrame {
            points,
            colors: frame.colors.clone(),
            part_labels: frame.part_labels.clone(),
            timestamp_s: frame.timestamp_s,
        },
        degenerate,
    }
}
