//! Independent reference implementations and fixtures shared by the
//! integration tests.
#![allow(dead_code)]

use georeid_core::geom::{PersonFrame, PlyError};
use georeid_core::rng;
use rand::Rng;

/// A frame with coordinates exactly representable in f32, as PLY stores
/// them.
pub fn random_frame(seed: u64, n: usize, colors: bool, labels: bool) -> PersonFrame {
    let mut r = rng::stream(seed, "test-frame", &[]);
    let points = (0..n)
        .map(|_| std::array::from_fn(|_| (r.random::<f64>() * 4.0 - 2.0) as f32 as f64))
        .collect();
    let colors = colors.then(|| {
        (0..n)
            .map(|_| std::array::from_fn(|_| r.random_range(0..=255u8) as f64 / 255.0))
            .collect()
    });
    let labels = labels.then(|| (0..n).map(|_| r.random_range(-1..11)).collect());
    PersonFrame::new(points, colors, labels, 0.0).unwrap()
}

const XYZ: &str = "property float x\nproperty float y\nproperty float z\n";

pub type ErrorCheck = fn(&PlyError) -> bool;

/// Malformed PLY inputs, each with a check for the error it must produce.
pub fn malformed_corpora() -> Vec<(&'static str, Vec<u8>, ErrorCheck)> {
    let doc = |s: String| s.into_bytes();
    vec![
        (
            "missing magic",
            doc(format!("plx\nformat ascii 1.0\nelement vertex 1\n{XYZ}end_header\n0 0 0\n")),
            |e| matches!(e, PlyError::MalformedHeader(_)),
        ),
        (
            "missing end_header",
            doc(format!("ply\nformat ascii 1.0\nelement vertex 1\n{XYZ}")),
            |e| matches!(e, PlyError::MalformedHeader(_)),
        ),
        (
            "big-endian format",
            doc(format!("ply\nformat binary_big_endian 1.0\nelement vertex 1\n{XYZ}end_header\n")),
            |e| matches!(e, PlyError::MalformedHeader(_)),
        ),
        (
            "unsupported version",
            doc(format!("ply\nformat ascii 2.0\nelement vertex 1\n{XYZ}end_header\n0 0 0\n")),
            |e| matches!(e, PlyError::MalformedHeader(_)),
        ),
        (
            "non-numeric vertex count",
            doc(format!("ply\nformat ascii 1.0\nelement vertex many\n{XYZ}end_header\n")),
            |e| matches!(e, PlyError::MalformedHeader(_)),
        ),
        (
            "missing z",
            doc("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nend_header\n0 0\n".into()),
            |e| matches!(e, PlyError::MalformedHeader(_)),
        ),
        (
            "list property on vertex",
            doc(format!(
                "ply\nformat ascii 1.0\nelement vertex 1\n{XYZ}property list uchar int idx\nend_header\n0 0 0 0\n"
            )),
            |e| matches!(e, PlyError::UnsupportedProperty { .. }),
        ),
        (
            "unknown scalar type",
            doc(format!("ply\nformat ascii 1.0\nelement vertex 1\n{XYZ}property quad w\nend_header\n0 0 0 0\n")),
            |e| matches!(e, PlyError::UnsupportedProperty { .. }),
        ),
        (
            "truncated ascii body",
            doc(format!("ply\nformat ascii 1.0\nelement vertex 3\n{XYZ}end_header\n0 0 0\n1 1 1\n")),
            |e| *e == PlyError::TruncatedBody { expected: 3, read: 2 },
        ),
        (
            "truncated binary body",
            {
                let mut b = doc(format!("ply\nformat binary_little_endian 1.0\nelement vertex 2\n{XYZ}end_header\n"));
                b.extend_from_slice(&[0u8; 13]);
                b
            },
            |e| *e == PlyError::TruncatedBody { expected: 2, read: 1 },
        ),
    ]
}

/// A probe/gallery instance with unit-norm embeddings on a coarse grid, so
/// distance ties and duplicate embeddings are common.
pub struct RetrievalInstance {
    pub probes: Vec<Vec<f64>>,
    pub probe_labels: Vec<String>,
    pub gallery: Vec<Vec<f64>>,
    pub gallery_labels: Vec<String>,
}

pub fn random_instance(seed: u64, max_probes: usize, max_gallery: usize) -> RetrievalInstance {
    let mut r = rng::stream(seed, "retrieval-instance", &[]);
    let dim = r.random_range(2..=4);
    fn vector(r: &mut impl Rng, dim: usize) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| r.random_range(-2..=2) as f64).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 0.0 {
                return v.iter().map(|x| x / n).collect();
            }
        }
    }
    let n_gallery = r.random_range(1..=max_gallery);
    let n_ids = r.random_range(1..=n_gallery.min(4));
    let mut gallery_labels: Vec<String> = (0..n_gallery).map(|i| format!("id{}", i % n_ids)).collect();
    // Shuffle label positions without losing any identity.
    for i in (1..gallery_labels.len()).rev() {
        let j = r.random_range(0..=i);
        gallery_labels.swap(i, j);
    }
    let gallery = (0..n_gallery).map(|_| vector(&mut r, dim)).collect();
    let n_probes = r.random_range(1..=max_probes);
    let probe_labels = (0..n_probes).map(|_| format!("id{}", r.random_range(0..n_ids))).collect();
    let probes = (0..n_probes).map(|_| vector(&mut r, dim)).collect();
    RetrievalInstance {
        probes,
        probe_labels,
        gallery,
        gallery_labels,
    }
}

/// mAP, CMC@3, micro and macro rank-1 accuracy by direct enumeration: every
/// gallery item's rank is counted from pairwise comparisons.
pub fn brute_force_metrics(inst: &RetrievalInstance) -> [f64; 4] {
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut ap_sum = 0.0;
    let mut cmc = 0.0;
    let mut top1 = 0.0;
    let mut per_id: Vec<(String, f64, f64)> = Vec::new();
    for (p, pl) in inst.probes.iter().zip(&inst.probe_labels) {
        let d: Vec<f64> = inst.gallery.iter().map(|g| sq(p, g)).collect();
        let rank = |j: usize| 1 + (0..d.len()).filter(|&k| d[k] < d[j] || (d[k] == d[j] && k < j)).count();
        let positives: Vec<usize> = (0..d.len()).filter(|&j| inst.gallery_labels[j] == *pl).collect();
        let mut ap = 0.0;
        for &j in &positives {
            let rj = rank(j);
            let before = positives.iter().filter(|&&k| rank(k) <= rj).count();
            ap += before as f64 / rj as f64;
        }
        ap_sum += ap / positives.len() as f64;
        let first = positives.iter().map(|&j| rank(j)).min().unwrap();
        cmc += (first <= 3) as u8 as f64;
        top1 += (first == 1) as u8 as f64;
        match per_id.iter_mut().find(|(l, _, _)| l == pl) {
            Some(e) => {
                e.1 += (first == 1) as u8 as f64;
                e.2 += 1.0;
            }
            None => per_id.push((pl.clone(), (first == 1) as u8 as f64, 1.0)),
        }
    }
    let n = inst.probes.len() as f64;
    let macro_acc = per_id.iter().map(|(_, h, t)| h / t).sum::<f64>() / per_id.len() as f64;
    [ap_sum / n, cmc / n, top1 / n, macro_acc]
}

/// Composite Simpson rule with `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

const QUAD_INTERVALS: usize = 200_000;

/// Two-sided Student-t tail by quadrature of the unnormalized density over
/// `x = tan(theta)`, normalized by the same integral over the whole line.
pub fn t_two_sided_p_quadrature(t: f64, df: f64) -> f64 {
    let g = |theta: f64| {
        let x = theta.tan();
        let c = theta.cos();
        (1.0 + x * x / df).powf(-(df + 1.0) / 2.0) / (c * c)
    };
    let half = std::f64::consts::FRAC_PI_2;
    let total = simpson(g, 0.0, half, QUAD_INTERVALS);
    let inner = simpson(g, 0.0, t.abs().atan(), QUAD_INTERVALS);
    (total - inner) / total
}

/// Upper F tail by quadrature over `x = tan(theta)^2`.
pub fn f_upper_p_quadrature(f: f64, d1: f64, d2: f64) -> f64 {
    let g = |theta: f64| {
        let t = theta.tan();
        let x = t * t;
        let c = theta.cos();
        2.0 * t.powf(d1 - 1.0) * (d1 * x + d2).powf(-(d1 + d2) / 2.0) / (c * c)
    };
    let half = std::f64::consts::FRAC_PI_2;
    // The integrand vanishes (d2 > 1) or is bounded (d2 = 1) at pi/2; stop
    // a hair short to avoid evaluating tan there.
    let end = half - 1e-12;
    let total = simpson(g, 0.0, end, QUAD_INTERVALS);
    let inner = simpson(g, 0.0, f.sqrt().atan(), QUAD_INTERVALS);
    (total - inner) / total
}

/// Repeated-measures F from an explicit sum-of-squares decomposition:
/// `rows` are conditions, columns are subjects.
pub fn anova_oracle(rows: &[Vec<f64>]) -> (f64, f64, f64) {
    let m = rows.len();
    let n = rows[0].len();
    let mut grand = 0.0;
    for row in rows {
        for v in row {
            grand += v;
        }
    }
    grand /= (m * n) as f64;
    let mut ss_within = 0.0;
    let mut ss_cond = 0.0;
    for row in rows {
        let mean = row.iter().sum::<f64>() / n as f64;
        ss_cond += n as f64 * (mean - grand) * (mean - grand);
        for v in row {
            ss_within += (v - mean) * (v - mean);
        }
    }
    // Within-condition variation splits into subjects and error.
    let mut ss_subj = 0.0;
    for j in 0..n {
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / m as f64;
        ss_subj += m as f64 * (mean - grand) * (mean - grand);
    }
    let ss_error = ss_within - ss_subj;
    let (d1, d2) = ((m - 1) as f64, ((m - 1) * (n - 1)) as f64);
    ((ss_cond / d1) / (ss_error / d2), d1, d2)
}

/// Twenty model/batch shapes for gradient checking:
/// (seed, identities, samples per identity, layer widths).
pub fn gradient_check_configs() -> Vec<(u64, usize, usize, Vec<usize>)> {
    (0..20u64)
        .map(|i| {
            let input = [4, 6, 8, 16, 48][i as usize % 5];
            let hidden: Vec<usize> = match i % 4 {
                0 => vec![],
                1 => vec![8],
                2 => vec![12, 6],
                _ => vec![16, 16],
            };
            let mut dims = vec![input];
            dims.extend(hidden);
            dims.push(2 + (i as usize % 3) * 3);
            (1000 + i, 2 + (i as usize % 3), 2 + (i as usize % 2) * 2, dims)
        })
        .collect()
}
