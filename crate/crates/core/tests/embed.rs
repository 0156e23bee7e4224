use georeid_core::embed::descriptor::{hue_bin, GEOMETRIC_DIM, HUE_BINS};
use georeid_core::embed::model::{Layer, ModelError};
use georeid_core::embed::triplet::{batch_hard_mine, random_check_problem, triplet_batch_eval, MineError, Triplet};
use georeid_core::embed::{
    appearance_descriptor, geometric_descriptor, gradient_check, train_embedding,
    triplet_loss, EmbeddingModel, TrainConfig, TrainError,
};
use georeid_core::geom::PersonFrame;
use georeid_core::render::{project_person, render_sequence, ProjectedImages};
use georeid_core::rng;
use georeid_core::synthor::{accent_color, generate_sequence, sample_identity, GenMode, ModeTag};
use proptest::prelude::*;
use rand::Rng;

mod support;
use support::gradient_check_configs;

fn rendered(seed: u64, id: u64, tag: ModeTag, n_frames: usize, fps: f64, edit: impl Fn(&mut georeid_core::synthor::IdentityParams)) -> Vec<ProjectedImages> {
    let mut params = sample_identity(seed, id);
    edit(&mut params);
    let seq = generate_sequence(&params, GenMode { tag, noise_sd_m: 0.005 }, n_frames, fps, seed * 100 + id).unwrap();
    render_sequence(&seq, (64, 64)).unwrap()
}

#[test]
fn height_feature_recovers_true_height() {
    let images = rendered(1, 0, ModeTag::Standardized, 20, 15.0, |p| p.height_m = 1.80);
    let d = geometric_descriptor(&images, 15.0).unwrap();
    assert_eq!(d.values.len(), GEOMETRIC_DIM);
    assert!((1.77..=1.83).contains(&d.values[0]), "height p99 {}", d.values[0]);
}

#[test]
fn gait_frequency_matches_cadence() {
    for id in 0..12 {
        let images = rendered(2, id, ModeTag::Standardized, 90, 30.0, |p| p.cadence_hz = 1.0);
        let f = geometric_descriptor(&images, 30.0).unwrap().values[6];
        assert!((0.9..=1.1).contains(&f), "id {id}: {f} Hz");
    }
}

#[test]
fn repeated_frame_has_no_gait_frequency() {
    let images = rendered(3, 1, ModeTag::Standardized, 2, 15.0, |_| {});
    let still = vec![images[0].clone(); 10];
    assert_eq!(geometric_descriptor(&still, 15.0).unwrap().values[6], 0.0);
}

#[test]
fn gray_pixels_fill_the_achromatic_bin() {
    let mut r = rng::stream(4, "gray", &[]);
    let points: Vec<[f64; 3]> = (0..3000)
        .map(|_| [r.random::<f64>() * 0.4 - 0.2, r.random::<f64>() * 1.7, 0.0])
        .collect();
    let colors = (0..points.len())
        .map(|_| {
            let g = r.random::<f64>();
            [g, g, g]
        })
        .collect();
    let frame = PersonFrame::new(points, Some(colors), None, 0.0).unwrap();
    let img = project_person(&frame, (64, 64)).unwrap();
    let d = appearance_descriptor(&[img.clone(), img]).unwrap();
    for band in 0..3 {
        assert_eq!(d.values[band * HUE_BINS], 1.0);
        assert!(d.values[band * HUE_BINS + 1..(band + 1) * HUE_BINS].iter().all(|v| *v == 0.0));
    }
}

#[test]
fn confounded_feet_band_peaks_at_the_identity_hue() {
    for id in 0..6 {
        let images = rendered(5, id, ModeTag::Confounded, 6, 15.0, |_| {});
        let d = appearance_descriptor(&images).unwrap();
        let feet = &d.values[2 * HUE_BINS..3 * HUE_BINS];
        let argmax = (0..HUE_BINS).max_by(|&a, &b| feet[a].total_cmp(&feet[b])).unwrap();
        assert_eq!(argmax, hue_bin(accent_color(id)), "id {id}");
    }
}

#[test]
fn standardized_identities_look_alike() {
    let a = appearance_descriptor(&rendered(6, 0, ModeTag::Standardized, 6, 15.0, |_| {})).unwrap();
    let b = appearance_descriptor(&rendered(6, 5, ModeTag::Standardized, 6, 15.0, |_| {})).unwrap();
    let l1: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).sum();
    assert!(l1 <= 0.1, "L1 {l1}");
}

#[test]
fn identity_layer_passes_unit_inputs_through() {
    let mut layer = Layer::zeros(3, 3);
    for i in 0..3 {
        layer.weights[i * 3 + i] = 1.0;
    }
    let model = EmbeddingModel::new(vec![layer], None).unwrap();
    let x = [0.6, 0.0, 0.8];
    let y = model.forward(&x).unwrap();
    for i in 0..3 {
        assert!((y[i] - x[i]).abs() < 1e-15);
    }
    let zero = EmbeddingModel::new(vec![Layer::zeros(3, 2)], None).unwrap();
    assert_eq!(zero.forward(&x), Err(ModelError::NormalizationDegenerate));
    assert!(matches!(model.forward(&[1.0]), Err(ModelError::DimensionMismatch { .. })));
}

proptest! {
    #[test]
    fn embeddings_are_unit_norm_and_deterministic(seed in 0u64..10_000, scale in 0.01f64..100.0) {
        let model = EmbeddingModel::init(&[6, 10, 4], seed).unwrap();
        let mut r = rng::stream(seed, "input", &[]);
        let x: Vec<f64> = (0..6).map(|_| scale * (r.random::<f64>() - 0.5)).collect();
        match model.forward(&x) {
            Ok(y) => {
                let n = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                prop_assert!((n - 1.0).abs() <= 1e-6);
                prop_assert_eq!(model.forward(&x).unwrap(), y);
            }
            Err(e) => prop_assert_eq!(e, ModelError::NormalizationDegenerate),
        }
    }

    #[test]
    fn triplet_loss_is_a_hinge(d_ap in 0.0f64..4.0, d_an in 0.0f64..4.0, margin in 0.01f64..1.0) {
        let l = triplet_loss(d_ap, d_an, margin);
        prop_assert!(l >= 0.0);
        prop_assert_eq!(l == 0.0, d_an >= d_ap + margin);
    }

    #[test]
    fn mining_ignores_monotone_transforms(seed in 0u64..10_000, coarse in any::<bool>()) {
        let mut r = rng::stream(seed, "mining", &[]);
        let n = 8;
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let mut d = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let v = if coarse { r.random_range(0..4) as f64 } else { r.random::<f64>() * 4.0 };
                d[i][j] = v;
                d[j][i] = v;
            }
        }
        let transformed: Vec<Vec<f64>> =
            d.iter().map(|row| row.iter().map(|v| (1.5 * v).exp() + v * v * v).collect()).collect();
        prop_assert_eq!(batch_hard_mine(&d, &labels).unwrap(), batch_hard_mine(&transformed, &labels).unwrap());
    }
}

#[test]
fn mining_examples() {
    let d = vec![
        vec![0.0, 0.2, 0.9, 0.4],
        vec![0.2, 0.0, 0.5, 0.6],
        vec![0.9, 0.5, 0.0, 0.3],
        vec![0.4, 0.6, 0.3, 0.0],
    ];
    let t = batch_hard_mine(&d, &["A", "A", "B", "B"]).unwrap();
    assert_eq!(t[0], Triplet { anchor: 0, positive: 1, negative: 3 });
    let flat = vec![vec![1.0; 4]; 4];
    let t = batch_hard_mine(&flat, &["A", "B", "A", "B"]).unwrap();
    assert_eq!((t[3].positive, t[3].negative), (1, 0));
    assert_eq!(
        batch_hard_mine(&vec![vec![1.0; 3]; 3], &["A", "B", "B"]),
        Err(MineError::SingletonLabel { anchor: 0 })
    );
}

#[test]
fn gradient_check_passes_on_twenty_configurations() {
    let start = std::time::Instant::now();
    for (seed, ids, per_id, dims) in gradient_check_configs() {
        let (model, xs, labels) = random_check_problem(seed, ids, per_id, &dims);
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let report = gradient_check(&model, &refs, &labels, 0.3, 200, seed).unwrap();
        assert!(report.checked > 0, "seed {seed}: nothing checked");
        assert!(report.max_rel_error < 1e-4, "seed {seed} {dims:?}: {report:?}");
    }
    assert!(start.elapsed().as_secs_f64() < 60.0);
}

fn identity_model(dim: usize) -> EmbeddingModel {
    let mut layer = Layer::zeros(dim, dim);
    for i in 0..dim {
        layer.weights[i * dim + i] = 1.0;
    }
    EmbeddingModel::new(vec![layer], None).unwrap()
}

#[test]
fn inactive_triplets_have_zero_gradient() {
    let model = identity_model(2);
    let xs: Vec<&[f64]> = vec![&[1.0, 0.0], &[1.0, 0.001], &[-1.0, 0.0], &[-1.0, 0.001]];
    let labels = [0, 0, 1, 1];
    let eval = georeid_core::embed::batch_hard_eval(&model, &xs, &labels, 0.3).unwrap();
    assert_eq!(eval.loss, 0.0);
    assert!(eval.active.iter().all(|a| !a));
    assert!(eval.grads.layers.iter().all(|l| l.weights.iter().chain(&l.bias).all(|g| *g == 0.0)));
    let report = gradient_check(&model, &xs, &labels, 0.3, 200, 0).unwrap();
    assert_eq!(report.max_rel_error, 0.0);
    assert_eq!(report.checked, model.param_count());
}

#[test]
fn single_linear_layer_matches_closed_form() {
    let mut r = rng::stream(8, "linear", &[]);
    let (din, dout) = (4, 3);
    let mut layer = Layer::zeros(din, dout);
    for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
        *w = r.random::<f64>() - 0.5;
    }
    let model = EmbeddingModel::new(vec![layer.clone()], None).unwrap();
    let x: Vec<Vec<f64>> = (0..3).map(|_| (0..din).map(|_| r.random::<f64>() - 0.5).collect()).collect();
    let margin = 2.0;
    let refs: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
    let eval = triplet_batch_eval(&model, &refs, &[Triplet { anchor: 0, positive: 1, negative: 2 }], margin).unwrap();

    // e = Wx + b, u = e / |e|; L = |ua - up|^2 - |ua - un|^2 + m.
    let e: Vec<Vec<f64>> = x
        .iter()
        .map(|xi| (0..dout).map(|o| layer.bias[o] + (0..din).map(|i| layer.weights[o * din + i] * xi[i]).sum::<f64>()).collect())
        .collect();
    let norms: Vec<f64> = e.iter().map(|v| v.iter().map(|a| a * a).sum::<f64>().sqrt()).collect();
    let u: Vec<Vec<f64>> = e.iter().zip(&norms).map(|(v, n)| v.iter().map(|a| a / n).collect()).collect();
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
    let loss = sq(&u[0], &u[1]) - sq(&u[0], &u[2]) + margin;
    assert!(loss > 0.0);
    assert!((eval.loss - loss).abs() < 1e-12);
    let du: Vec<Vec<f64>> = vec![
        (0..dout).map(|k| 2.0 * (u[2][k] - u[1][k])).collect(),
        (0..dout).map(|k| -2.0 * (u[0][k] - u[1][k])).collect(),
        (0..dout).map(|k| 2.0 * (u[0][k] - u[2][k])).collect(),
    ];
    let mut gw = vec![0.0; din * dout];
    let mut gb = vec![0.0; dout];
    for s in 0..3 {
        let dot: f64 = (0..dout).map(|k| u[s][k] * du[s][k]).sum();
        for o in 0..dout {
            let de = (du[s][o] - u[s][o] * dot) / norms[s];
            gb[o] += de;
            for i in 0..din {
                gw[o * din + i] += de * x[s][i];
            }
        }
    }
    let g = &eval.grads.layers[0];
    for (a, b) in g.weights.iter().zip(&gw).chain(g.bias.iter().zip(&gb)) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

fn toy_set(seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut r = rng::stream(seed, "toy", &[]);
    let sigma = 0.1;
    let mut xs = Vec::new();
    let mut labels = Vec::new();
    for id in 0..2 {
        let center = if id == 0 { [0.5, 0.5, 0.0, 0.0] } else { [-0.5, -0.5, 0.0, 0.0] };
        for _ in 0..8 {
            xs.push(center.iter().map(|c| c + sigma * (r.random::<f64>() - 0.5) * 2.0).collect());
            labels.push(id);
        }
    }
    (xs, labels)
}

fn toy_config(seed: u64) -> TrainConfig {
    TrainConfig {
        margin: 0.3,
        learning_rate: 0.05,
        epochs: 50,
        batch_p: 2,
        batch_k: 4,
        seed,
        hidden: vec![8],
        embed_dim: 4,
        input_sd_floor: 0.0,
    }
}

#[test]
fn separable_toy_set_trains_to_zero_loss() {
    let mut monotone = 0;
    let seeds = 20;
    for seed in 0..seeds {
        let (xs, labels) = toy_set(seed);
        let result = train_embedding(&xs, &labels, &toy_config(seed)).unwrap();
        let last = *result.loss_curve.last().unwrap();
        assert!(last < 0.01, "seed {seed}: final loss {last}");
        if result.loss_curve[5..].windows(2).all(|w| w[1] <= w[0] + 1e-12) {
            monotone += 1;
        }
    }
    assert!(monotone as f64 >= 0.95 * seeds as f64, "{monotone}/{seeds} non-increasing");
}

#[test]
fn zero_learning_rate_freezes_the_loss() {
    let (xs, labels) = toy_set(1);
    let cfg = TrainConfig {
        learning_rate: 0.0,
        epochs: 6,
        ..toy_config(1)
    };
    let result = train_embedding(&xs, &labels, &cfg).unwrap();
    assert!(result.loss_curve.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn training_is_bit_reproducible() {
    let (xs, labels) = toy_set(2);
    let a = train_embedding(&xs, &labels, &toy_config(2)).unwrap();
    let b = train_embedding(&xs, &labels, &toy_config(2)).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.loss_curve), bits(&b.loss_curve));
    assert_eq!(a.model, b.model);
}

#[test]
fn too_few_identities_is_insufficient_data() {
    let (xs, labels) = toy_set(3);
    let cfg = TrainConfig {
        batch_p: 3,
        ..toy_config(3)
    };
    assert!(matches!(
        train_embedding(&xs, &labels, &cfg),
        Err(TrainError::InsufficientData { needed: 3, .. })
    ));
}
