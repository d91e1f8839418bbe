use super::*;
use crate::moments::DEFAULT_EPS;
use crate::pooling::Statistic;
use rand_distr::StandardNormal;

fn gaussian(t: usize, d: usize, rng: &mut ChaCha8Rng) -> FrameSequence {
    FrameSequence::new(Array2::from_shape_simple_fn((t, d), || rng.sample(StandardNormal))).unwrap()
}

fn config(pooling: &str, input_dim: usize, classes: usize) -> EncoderConfig {
    EncoderConfig {
        input_dim,
        frame_hidden: vec![16],
        pooling: PoolingConfig::parse(pooling).unwrap(),
        embed_dim: 12,
        num_classes: classes,
        arcface_scale: 30.0,
        arcface_margin: 0.2,
        seed: 7,
    }
}

/// Gaussian clusters: class `c` frames are `center_c + noise`.
fn clusters(classes: usize, per_class: usize, dim: usize, spread: f64, seed: u64) -> Vec<(FrameSequence, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Array1<f64>> = (0..classes)
        .map(|_| Array1::from_shape_simple_fn(dim, || spread * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let mut out = Vec::new();
    for _ in 0..per_class {
        for (c, center) in centers.iter().enumerate() {
            let t = rng.random_range(15..25);
            let noise = gaussian(t, dim, &mut rng).into_inner();
            out.push((FrameSequence::new(noise + center).unwrap(), c));
        }
    }
    out
}

#[test]
fn config_validation() {
    let mut c = config("mean", 3, 4);
    assert!(c.validate().is_ok());
    c.num_classes = 1;
    assert!(c.validate().is_err());
    let mut c = config("mean", 3, 4);
    c.arcface_margin = 0.7;
    assert!(c.validate().is_err());
    let mut c = config("mean", 3, 4);
    c.frame_hidden = vec![4, 0];
    assert!(ModelState::init(c).is_err());
}

#[test]
fn zero_weights_give_bias_embedding() {
    let mut model = ModelState::init(config("mean-std", 4, 3)).unwrap();
    for l in &mut model.frame_layers {
        l.weight.fill(0.0);
        l.bias.fill(0.0);
    }
    model.segment.weight.fill(0.0);
    model.segment.bias = Array1::from_shape_fn(12, |i| i as f64 * 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let emb = model.forward_embed(&gaussian(9, 4, &mut rng)).unwrap();
    assert_eq!(emb, model.segment.bias.to_vec());
    model.segment.bias.fill(0.0);
    let emb = model.forward_embed(&gaussian(9, 4, &mut rng)).unwrap();
    assert!(emb.iter().all(|&v| v == 0.0));
}

#[test]
fn embedding_is_deterministic_and_permutation_invariant() {
    let model = ModelState::init(config("max-mean-std-skew-kurto", 5, 3)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = gaussian(20, 5, &mut rng);
    let a = model.forward_embed(&x).unwrap();
    let b = model.forward_embed(&x).unwrap();
    assert_eq!(a, b);
    for _ in 0..10 {
        let mut order: Vec<usize> = (0..20).collect();
        order.shuffle(&mut rng);
        let permuted = FrameSequence::new(x.view().select(Axis(0), &order)).unwrap();
        let p = model.forward_embed(&permuted).unwrap();
        for (u, v) in a.iter().zip(&p) {
            assert!((u - v).abs() <= 1e-9 * u.abs().max(v.abs()).max(1.0));
        }
    }
}

#[test]
fn rejects_wrong_input_dim() {
    let model = ModelState::init(config("mean", 5, 3)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    assert!(matches!(
        model.forward_embed(&gaussian(4, 6, &mut rng)),
        Err(Error::DimensionMismatch { expected: 5, found: 6 })
    ));
}

#[test]
fn margin_free_unit_scale_is_cosine_softmax() {
    let model = ModelState::init(config("mean", 3, 4)).unwrap();
    let emb = vec![0.2, -1.0, 0.4, 0.0, 1.0, 2.0, -0.5, 0.1, 0.0, 0.3, 0.3, -0.2];
    let cos = arcface::cosines(&model.classes, ndarray::ArrayView1::from(&emb[..]));
    for label in 0..4 {
        let plain = crate::nn::cross_entropy(&cos, label);
        assert!((arcface_loss(&model, &emb, label, 1.0, 0.0) - plain).abs() < 1e-12);
    }
}

#[test]
fn full_network_gradient_matches_finite_differences() {
    // three trainable layers before the head: two frame layers and the segment layer
    let cfg = EncoderConfig {
        input_dim: 6,
        frame_hidden: vec![7, 5],
        pooling: PoolingConfig::new(
            vec![Statistic::Mean, Statistic::Std, Statistic::Skew, Statistic::Kurt],
            DEFAULT_EPS,
        )
        .unwrap(),
        embed_dim: 4,
        num_classes: 3,
        arcface_scale: 5.0,
        arcface_margin: 0.2,
        seed: 11,
    };
    let mut model = ModelState::init(cfg).unwrap();
    // positive biases keep most units away from the ReLU kink
    for l in &mut model.frame_layers {
        l.bias.fill(0.3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let others: Vec<FrameSequence> = (0..5).map(|_| gaussian(8, 6, &mut rng)).collect();
    model.fit_pooled_norm(&others.iter().collect::<Vec<_>>()).unwrap();
    assert!(model.pooled_scale.iter().any(|&s| s != 1.0));
    let x = gaussian(8, 6, &mut rng);
    let label = 1;
    let (_, grads) = model.loss_and_grads(&x, label).unwrap();
    let h = 1e-5;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-6);

    let mut worst = 0.0f64;
    let mut check = |model: &mut ModelState, get: &dyn Fn(&mut ModelState) -> &mut f64, analytic: f64| {
        let orig = *get(model);
        *get(model) = orig + h;
        let up = model.loss(&x, label).unwrap();
        *get(model) = orig - h;
        let down = model.loss(&x, label).unwrap();
        *get(model) = orig;
        worst = worst.max(rel(analytic, (up - down) / (2.0 * h)));
    };
    for l in 0..2 {
        let (r, c) = model.frame_layers[l].weight.dim();
        for i in 0..r {
            for j in 0..c {
                let a = grads.frame_layers[l].weight[[i, j]];
                check(&mut model, &move |m: &mut ModelState| &mut m.frame_layers[l].weight[[i, j]], a);
            }
            let a = grads.frame_layers[l].bias[i];
            check(&mut model, &move |m: &mut ModelState| &mut m.frame_layers[l].bias[i], a);
        }
    }
    let (r, c) = model.segment.weight.dim();
    for i in 0..r {
        for j in 0..c {
            let a = grads.segment.weight[[i, j]];
            check(&mut model, &move |m: &mut ModelState| &mut m.segment.weight[[i, j]], a);
        }
    }
    let (r, c) = model.classes.dim();
    for i in 0..r {
        for j in 0..c {
            let a = grads.classes[[i, j]];
            check(&mut model, &move |m: &mut ModelState| &mut m.classes[[i, j]], a);
        }
    }
    assert!(worst <= 1e-4, "worst relative error {worst}");
}

#[test]
fn zero_learning_rate_is_a_no_op() {
    let cfg = config("mean-std", 4, 3);
    let data = clusters(3, 4, 4, 2.0, 5);
    let opts = TrainOptions {
        epochs: 2,
        lr: 0.0,
        batch_size: 4,
        segment_len: None,
        standardize_pooled: false,
        weight_decay: 0.0,
    };
    let trained = train(&cfg, &data, &opts).unwrap();
    assert_eq!(trained.model, ModelState::init(cfg).unwrap());
}

#[test]
fn training_is_bitwise_deterministic() {
    let cfg = config("mean-std-skew", 4, 3);
    let data = clusters(3, 6, 4, 2.0, 6);
    let opts = TrainOptions {
        epochs: 3,
        lr: 0.05,
        batch_size: 5,
        segment_len: Some(12),
        standardize_pooled: true,
        weight_decay: 0.0,
    };
    let a = train(&cfg, &data, &opts).unwrap();
    let b = train(&cfg, &data, &opts).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.epoch_losses, b.epoch_losses);
}

#[test]
fn rejects_out_of_range_labels() {
    let cfg = config("mean", 4, 3);
    let mut data = clusters(3, 1, 4, 1.0, 7);
    data[0].1 = 3;
    assert!(matches!(
        train(&cfg, &data, &TrainOptions::default()),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn separable_speakers_are_learned() {
    let cfg = EncoderConfig {
        frame_hidden: vec![32],
        embed_dim: 32,
        ..config("mean-std", 8, 20)
    };
    let data = clusters(20, 10, 8, 1.0, 8);
    let opts = TrainOptions {
        epochs: 30,
        lr: 0.01,
        batch_size: 16,
        segment_len: None,
        standardize_pooled: true,
        weight_decay: 0.0,
    };
    let trained = train(&cfg, &data, &opts).unwrap();
    let losses = &trained.epoch_losses;
    for w in losses[..5].windows(2) {
        assert!(w[1] < w[0], "loss did not decrease: {losses:?}");
    }
    let acc = accuracy(&trained.model, &data).unwrap();
    assert!(acc >= 0.95, "training accuracy {acc}");
}

#[test]
fn skew_pooling_cannot_see_mean_shifts() {
    // Without frame layers the pooled skewness of each class has the same
    // distribution, because classes differ only by a shift of the frames.
    let cfg = EncoderConfig {
        frame_hidden: vec![],
        ..config("skew", 8, 10)
    };
    let data = clusters(10, 40, 8, 3.0, 9);
    let opts = TrainOptions {
        epochs: 20,
        lr: 0.05,
        batch_size: 10,
        segment_len: None,
        standardize_pooled: true,
        weight_decay: 0.0,
    };
    let trained = train(&cfg, &data, &opts).unwrap();
    let acc = accuracy(&trained.model, &data).unwrap();
    assert!(acc <= 3.0 / 10.0, "skew-only accuracy {acc}");
}

#[test]
fn extract_all_matches_one_by_one() {
    let model = ModelState::init(config("max-std", 4, 3)).unwrap();
    assert!(extract_all(&model, &[]).unwrap().is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let utts: Vec<FrameSequence> = (0..9).map(|i| gaussian(5 + i, 4, &mut rng)).collect();
    let single = extract_all(&model, &utts[..1]).unwrap();
    assert_eq!(single, vec![model.forward_embed(&utts[0]).unwrap()]);
    let all = extract_all(&model, &utts).unwrap();
    for (x, e) in utts.iter().zip(&all) {
        let one = model.forward_embed(x).unwrap();
        for (a, b) in one.iter().zip(e) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let cfg = config("mean-std-skew", 4, 3);
    let data = clusters(3, 4, 4, 2.0, 11);
    let opts = TrainOptions {
        epochs: 2,
        ..TrainOptions::default()
    };
    let model = train(&cfg, &data, &opts).unwrap().model;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    checkpoint::save(&model, &path).unwrap();
    let loaded = checkpoint::load(&path).unwrap();
    assert_eq!(loaded, model);
    for (x, _) in &data {
        let a = model.forward_embed(x).unwrap();
        let b = loaded.forward_embed(x).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}

#[test]
fn constant_frames_stay_finite_for_every_pooling() {
    let constant = FrameSequence::new(Array2::from_elem((10, 4), 0.7)).unwrap();
    for k in 1..32u32 {
        let stats: Vec<Statistic> = Statistic::ALL
            .iter()
            .enumerate()
            .filter(|(i, _)| k & (1 << i) != 0)
            .map(|(_, s)| *s)
            .collect();
        let pooling = PoolingConfig::new(stats, DEFAULT_EPS).unwrap();
        let mut cfg = config("mean", 4, 3);
        cfg.pooling = pooling;
        let model = ModelState::init(cfg).unwrap();
        let emb = model.forward_embed(&constant).unwrap();
        assert!(emb.iter().all(|v| v.is_finite()));
        let (loss, grads) = model.loss_and_grads(&constant, 0).unwrap();
        assert!(loss.is_finite());
        assert!(grads.classes.iter().all(|v| v.is_finite()));
        assert!(grads.frame_layers.iter().all(Dense::is_finite));
    }
}

#[test]
fn fitted_pooled_norm_standardizes_the_fitting_set() {
    let mut model = ModelState::init(config("mean-std-skew", 4, 3)).unwrap();
    let data = clusters(3, 5, 4, 2.0, 11);
    let utts: Vec<&FrameSequence> = data.iter().map(|(x, _)| x).collect();
    model.fit_pooled_norm(&utts).unwrap();
    let pooled: Vec<Array1<f64>> = utts
        .iter()
        .map(|x| (model.pool(x).unwrap().1 - &model.pooled_shift) * &model.pooled_scale)
        .collect();
    let n = pooled.len() as f64;
    for k in 0..model.pooled_shift.len() {
        let mean = pooled.iter().map(|p| p[k]).sum::<f64>() / n;
        let var = pooled.iter().map(|p| (p[k] - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-10, "feature {k} mean {mean}");
        // dead ReLU units pool to a constant and keep unit scale
        if model.pooled_scale[k] != 1.0 {
            assert!((var - 1.0).abs() < 1e-10, "feature {k} var {var}");
        } else {
            assert!(var < 1e-12);
        }
    }
}

#[test]
fn weight_decay_shrinks_weights() {
    let cfg = config("mean-std", 4, 3);
    let data = clusters(3, 6, 4, 2.0, 12);
    let run = |weight_decay: f64| {
        let opts = TrainOptions {
            epochs: 10,
            lr: 0.05,
            batch_size: 6,
            segment_len: None,
            standardize_pooled: true,
            weight_decay,
        };
        let m = train(&cfg, &data, &opts).unwrap().model;
        m.segment.weight.iter().map(|w| w * w).sum::<f64>()
    };
    assert!(run(2.0) < run(0.0));
}
