use georeid_core::geom::{percentile, PersonSequence};
use georeid_core::synthor::skeleton::{L_SHIN_FOOT, NUM_BONES, R_SHIN_FOOT};
use georeid_core::synthor::{
    accent_color, generate_sequence, make_dataset, sample_identity, DatasetSpec, GenMode, ModeTag, SynthError,
    COLOR_NOISE_SD, HEIGHT_RANGE,
};

fn mode(tag: ModeTag, noise: f64) -> GenMode {
    GenMode { tag, noise_sd_m: noise }
}

#[test]
fn identities_are_deterministic_and_in_range() {
    assert_eq!(sample_identity(1, 5), sample_identity(1, 5));
    assert_ne!(sample_identity(1, 5), sample_identity(1, 6));
    let hs: Vec<f64> = (0..100).map(|i| sample_identity(1, i).height_m).collect();
    assert!(hs.iter().all(|h| (HEIGHT_RANGE.0..=HEIGHT_RANGE.1).contains(h)));
    let mean = hs.iter().sum::<f64>() / hs.len() as f64;
    assert!((1.70..=1.80).contains(&mean), "mean height {mean}");
}

#[test]
fn timestamps_follow_frame_rate() {
    let seq = generate_sequence(&sample_identity(2, 0), mode(ModeTag::Standardized, 0.0), 60, 30.0, 9).unwrap();
    assert_eq!(seq.frames.len(), 60);
    for (k, f) in seq.frames.iter().enumerate() {
        assert_eq!(f.timestamp_s, k as f64 / 30.0);
    }
    assert_eq!(
        generate_sequence(&sample_identity(2, 0), mode(ModeTag::Standardized, 0.0), 1, 30.0, 9),
        Err(SynthError::InvalidArg("n_frames must be at least 2, got 1".into()))
    );
}

fn part_means(seq: &PersonSequence, frame: usize) -> Vec<Option<[f64; 3]>> {
    let f = &seq.frames[frame];
    let (colors, labels) = (f.colors.as_ref().unwrap(), f.part_labels.as_ref().unwrap());
    (0..NUM_BONES as i32)
        .map(|b| {
            let sel: Vec<&[f64; 3]> = colors.iter().zip(labels).filter(|(_, l)| **l == b).map(|(c, _)| c).collect();
            (!sel.is_empty()).then(|| std::array::from_fn(|i| sel.iter().map(|c| c[i]).sum::<f64>() / sel.len() as f64))
        })
        .collect()
}

#[test]
fn standardized_parts_are_not_separable_by_mean_color() {
    let seq = generate_sequence(&sample_identity(3, 4), mode(ModeTag::Standardized, 0.005), 2, 15.0, 1).unwrap();
    let f = &seq.frames[0];
    let labels = f.part_labels.as_ref().unwrap();
    let means = part_means(&seq, 0);
    for (b, m) in means.iter().enumerate() {
        let Some(m) = m else { continue };
        let n = labels.iter().filter(|l| **l == b as i32).count() as f64;
        // Three standard errors of the per-part mean.
        let tol = 3.0 * COLOR_NOISE_SD / n.sqrt() + 1e-3;
        for c in 0..3 {
            assert!((m[c] - georeid_core::synthor::SCRUB_COLOR[c]).abs() <= tol, "part {b} channel {c}");
        }
    }
    let colors = f.colors.as_ref().unwrap();
    for c in 0..3 {
        let mean = colors.iter().map(|x| x[c]).sum::<f64>() / colors.len() as f64;
        let var = colors.iter().map(|x| (x[c] - mean).powi(2)).sum::<f64>() / colors.len() as f64;
        assert!(var.sqrt() <= 1.2 * COLOR_NOISE_SD);
    }
}

fn foot_mean(seq: &PersonSequence) -> [f64; 3] {
    let m = part_means(seq, 0);
    let (l, r) = (m[L_SHIN_FOOT].unwrap(), m[R_SHIN_FOOT].unwrap());
    std::array::from_fn(|i| (l[i] + r[i]) / 2.0)
}

fn max_norm(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max)
}

/// Independent HSV conversion of the golden-ratio accent hues.
fn oracle_accent(id: u64, sectors: u64) -> [f64; 3] {
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    let h = (id as f64 * golden).fract();
    let sector = (h * sectors as f64).floor();
    let h = (sector + 0.5) / sectors as f64;
    let (s, v) = (0.9, 0.9);
    let k = |n: f64| (n + h * 6.0) % 6.0;
    let f = |n: f64| v - v * s * k(n).min(4.0 - k(n)).clamp(0.0, 1.0);
    [f(5.0), f(3.0), f(1.0)]
}

#[test]
fn accent_colors_follow_golden_ratio_hues() {
    for id in 0..15 {
        let a = accent_color(id);
        let o = oracle_accent(id, georeid_core::synthor::ACCENT_HUE_SECTORS);
        assert!(max_norm(a, o) < 1e-12, "id {id}: {a:?} vs {o:?}");
    }
}

#[test]
fn confounded_foot_colors_differ_between_identities() {
    let feet: Vec<[f64; 3]> = (0..8)
        .map(|id| {
            let seq = generate_sequence(&sample_identity(7, id), mode(ModeTag::Confounded, 0.005), 2, 15.0, id).unwrap();
            foot_mean(&seq)
        })
        .collect();
    // Consecutive golden-ratio hues are 0.382 turns apart.
    for a in 1..feet.len() {
        assert!(max_norm(feet[a - 1], feet[a]) >= 0.2, "ids {},{a}", a - 1);
        assert!(max_norm(feet[a], accent_color(a as u64)) < 0.05);
    }
}

fn sequence_mean_rgb(seq: &PersonSequence) -> [f64; 3] {
    let mut sum = [0.0; 3];
    let mut n = 0.0;
    for f in &seq.frames {
        for c in f.colors.as_ref().unwrap() {
            for i in 0..3 {
                sum[i] += c[i];
            }
            n += 1.0;
        }
    }
    sum.map(|s| s / n)
}

/// Nearest-centroid accuracy on per-sequence mean RGB: centroids from the
/// first three surgeries, tested on the remaining ones.
fn centroid_accuracy(tag: ModeTag) -> f64 {
    let spec = DatasetSpec {
        n_identities: 8,
        n_surgeries: 6,
        seqs_per_surgery: 1,
        n_frames: 2,
        fps: 15.0,
    };
    let (manifest, seqs) = make_dataset(&spec, mode(tag, 0.005), 11).unwrap();
    let ids: Vec<usize> = manifest.entries.iter().map(|e| e.identity_id[1..].parse().unwrap()).collect();
    let train = |e: &georeid_core::geom::ManifestEntry| ["S01", "S02", "S03"].contains(&e.surgery_id.as_str());
    let mut centroids = vec![([0.0; 3], 0.0); 8];
    for ((e, s), &id) in manifest.entries.iter().zip(&seqs).zip(&ids) {
        if train(e) {
            let m = sequence_mean_rgb(s);
            for i in 0..3 {
                centroids[id].0[i] += m[i];
            }
            centroids[id].1 += 1.0;
        }
    }
    let centroids: Vec<[f64; 3]> = centroids.iter().map(|(s, n)| s.map(|v| v / n)).collect();
    let (mut hits, mut total) = (0.0, 0.0);
    for ((e, s), &id) in manifest.entries.iter().zip(&seqs).zip(&ids) {
        if train(e) {
            continue;
        }
        let m = sequence_mean_rgb(s);
        let d = |c: &[f64; 3]| (0..3).map(|i| (c[i] - m[i]).powi(2)).sum::<f64>();
        let pred = (0..8).min_by(|&a, &b| d(&centroids[a]).total_cmp(&d(&centroids[b]))).unwrap();
        hits += (pred == id) as u8 as f64;
        total += 1.0;
    }
    hits / total
}

#[test]
fn mean_rgb_identifies_people_only_in_confounded_mode() {
    let chance = 1.0 / 8.0;
    let std_acc = centroid_accuracy(ModeTag::Standardized);
    assert!(std_acc <= 2.0 * chance, "standardized accuracy {std_acc}");
    let conf_acc = centroid_accuracy(ModeTag::Confounded);
    assert!(conf_acc >= 0.9, "confounded accuracy {conf_acc}");
}

#[test]
fn height_is_recoverable_from_points() {
    for id in 0..10 {
        let params = sample_identity(13, id);
        let seq = generate_sequence(&params, mode(ModeTag::Standardized, 0.01), 8, 15.0, id).unwrap();
        let ys: Vec<f64> = seq
            .frames
            .iter()
            .flat_map(|f| f.points.iter().map(|p| p[1]))
            .collect();
        let est = percentile(&ys, 0.99);
        assert!((est - params.height_m).abs() <= 0.03, "id {id}: {est} vs {}", params.height_m);
    }
}

fn autocorr_peak_lag(signal: &[f64], min_lag: usize, max_lag: usize) -> usize {
    let n = signal.len();
    let mean = signal.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = signal.iter().map(|v| v - mean).collect();
    (min_lag..=max_lag)
        .max_by(|&a, &b| {
            let r = |lag: usize| (0..n - lag).map(|i| c[i] * c[i + lag]).sum::<f64>();
            r(a).total_cmp(&r(b))
        })
        .unwrap()
}

#[test]
fn foot_separation_oscillates_at_cadence() {
    let fps = 30.0;
    for id in 0..6 {
        let params = sample_identity(17, id);
        let seq = generate_sequence(&params, mode(ModeTag::Standardized, 0.005), 120, fps, 100 + id).unwrap();
        // Left-minus-right foot centroid in the horizontal plane.
        let d: Vec<[f64; 2]> = seq
            .frames
            .iter()
            .map(|f| {
                let labels = f.part_labels.as_ref().unwrap();
                let centroid = |b: usize| {
                    let sel: Vec<&[f64; 3]> =
                        f.points.iter().zip(labels).filter(|(_, l)| **l == b as i32).map(|(p, _)| p).collect();
                    let n = sel.len() as f64;
                    [sel.iter().map(|p| p[0]).sum::<f64>() / n, sel.iter().map(|p| p[2]).sum::<f64>() / n]
                };
                let (l, r) = (centroid(L_SHIN_FOOT), centroid(R_SHIN_FOOT));
                [l[0] - r[0], l[1] - r[1]]
            })
            .collect();
        // Signed separation along the principal horizontal axis.
        let n = d.len() as f64;
        let m = [d.iter().map(|v| v[0]).sum::<f64>() / n, d.iter().map(|v| v[1]).sum::<f64>() / n];
        let (mut sxx, mut sxz, mut szz) = (0.0, 0.0, 0.0);
        for v in &d {
            let (a, b) = (v[0] - m[0], v[1] - m[1]);
            sxx += a * a;
            sxz += a * b;
            szz += b * b;
        }
        let theta = 0.5 * (2.0 * sxz).atan2(sxx - szz);
        let signal: Vec<f64> = d.iter().map(|v| v[0] * theta.cos() + v[1] * theta.sin()).collect();
        let expected = fps / params.cadence_hz;
        let lag = autocorr_peak_lag(&signal, (fps / 1.5) as usize, (fps / 0.5) as usize);
        assert!((lag as f64 - expected).abs() <= 2.0, "id {id}: lag {lag}, expected {expected}");
    }
}

#[test]
fn datasets_have_the_planned_shape_and_are_deterministic() {
    let spec = |i, s, k| DatasetSpec {
        n_identities: i,
        n_surgeries: s,
        seqs_per_surgery: k,
        n_frames: 2,
        fps: 15.0,
    };
    let m = mode(ModeTag::Confounded, 0.005);
    let (manifest, seqs) = make_dataset(&spec(8, 6, 1), m, 3).unwrap();
    assert_eq!(manifest.entries.len(), 48);
    assert_eq!(seqs.len(), 48);
    for s in 1..=6 {
        for i in 0..8 {
            let sid = format!("S{s:02}");
            let pid = format!("P{i:02}");
            assert_eq!(manifest.entries.iter().filter(|e| e.surgery_id == sid && e.identity_id == pid).count(), 1);
        }
    }
    let (small, _) = make_dataset(&spec(2, 2, 2), m, 3).unwrap();
    assert_eq!(small.entries.len(), 8);
    assert_eq!(small.entries.iter().filter(|e| e.surgery_id == "S01").count(), 4);

    let (m1, s1) = make_dataset(&spec(2, 2, 2), m, 5).unwrap();
    let (m2, s2) = make_dataset(&spec(2, 2, 2), m, 5).unwrap();
    assert_eq!(m1, m2);
    assert_eq!(s1, s2);
    assert!(make_dataset(&spec(0, 2, 2), m, 5).is_err());
}
