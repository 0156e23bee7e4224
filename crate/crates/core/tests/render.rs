use georeid_core::geom::{PersonFrame, PersonSequence};
use georeid_core::render::{project_person, render_sequence, RenderError};
use georeid_core::synthor::{generate_sequence, sample_identity, GenMode, ModeTag};

fn walk(seed: u64, id: u64, height: Option<f64>, n_frames: usize) -> PersonSequence {
    let mut params = sample_identity(seed, id);
    if let Some(h) = height {
        params.height_m = h;
    }
    generate_sequence(
        &params,
        GenMode {
            tag: ModeTag::Confounded,
            noise_sd_m: 0.005,
        },
        n_frames,
        15.0,
        seed * 1000 + id,
    )
    .unwrap()
}

#[test]
fn ten_frame_walk_keeps_silhouette_height() {
    let seq = walk(1, 3, None, 10);
    let images = render_sequence(&seq, (64, 64)).unwrap();
    assert_eq!(images.len(), 10);
    let rows: Vec<usize> = images.iter().map(|i| i.silhouette_rows()).collect();
    let (lo, hi) = (rows.iter().min().unwrap(), rows.iter().max().unwrap());
    assert!(hi - lo <= 2, "silhouette heights {rows:?}");
}

#[test]
fn repeated_frame_renders_identically() {
    let seq = walk(2, 0, None, 2);
    let mut rep = seq.clone();
    rep.frames = (0..3)
        .map(|k| PersonFrame {
            timestamp_s: k as f64,
            ..seq.frames[0].clone()
        })
        .collect();
    let images = render_sequence(&rep, (64, 64)).unwrap();
    assert_eq!(images[0], images[1]);
    assert_eq!(images[1], images[2]);
    assert_eq!(images, render_sequence(&rep, (64, 64)).unwrap());
}

#[test]
fn out_of_volume_frame_is_named() {
    let mut seq = walk(3, 1, None, 5);
    // Flatten frame 3 into a sliver far below the floor after normalization
    // would keep it; instead push every point out of the depth slab.
    let f = &mut seq.frames[3];
    let spread: Vec<[f64; 3]> = f
        .points
        .iter()
        .enumerate()
        .map(|(i, _)| [if i % 2 == 0 { -50.0 } else { 50.0 }, 1.0, 0.0])
        .collect();
    f.points = spread;
    match render_sequence(&seq, (64, 64)) {
        Err(RenderError::EmptyFrame { frame }) => assert_eq!(frame, 3),
        other => panic!("expected EmptyFrame, got {other:?}"),
    }
}

#[test]
fn all_modalities_share_the_winning_point() {
    let seq = walk(4, 2, None, 3);
    for frame in &seq.frames {
        let n = georeid_core::geom::normalize_frame(frame).frame;
        let img = project_person(&n, (64, 64)).unwrap();
        let colors = n.colors.as_ref().unwrap();
        let labels = n.part_labels.as_ref().unwrap();
        for px in 0..img.mask.len() {
            match img.source[px] {
                Some(i) => {
                    let i = i as usize;
                    assert!(img.mask[px]);
                    assert_eq!(img.depth[px], n.points[i][2]);
                    assert_eq!(img.color[px], colors[i]);
                    assert_eq!(img.parts[px], labels[i]);
                }
                None => {
                    assert!(!img.mask[px]);
                    assert_eq!(img.parts[px], -1);
                }
            }
        }
    }
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            r[k] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn silhouette_height_is_monotone_in_true_height() {
    let mut heights = Vec::new();
    let mut pixels = Vec::new();
    for id in 0..24 {
        let seq = walk(5, id, None, 4);
        let params = sample_identity(5, id);
        let images = render_sequence(&seq, (64, 64)).unwrap();
        let mean = images.iter().map(|i| i.silhouette_rows() as f64).sum::<f64>() / images.len() as f64;
        heights.push(params.height_m);
        pixels.push(mean);
    }
    let rho = spearman(&heights, &pixels);
    assert!(rho >= 0.95, "rank correlation {rho}");
}
