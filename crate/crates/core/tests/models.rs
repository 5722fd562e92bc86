use unic_core::diffusion::NoiseSchedule;
use unic_core::models::*;
use unic_core::par::Workers;
use unic_core::rng::Rng;
use unic_tensor::Tensor;

fn tiny() -> DenoiserConfig {
    DenoiserConfig {
        image_size: 16,
        channels: [4, 6, 8],
        time_dim: 8,
        embed_dim: 8,
        ..DenoiserConfig::default()
    }
}

fn schedule() -> NoiseSchedule {
    NoiseSchedule::linear(50, 1e-4, 0.15).unwrap()
}

fn quick(steps: usize, batch: usize) -> TrainConfig {
    TrainConfig {
        steps,
        batch,
        shard: 4,
        eval_every: 5,
        ..TrainConfig::denoiser_default()
    }
}

fn images(n: usize, seed: u64) -> Tensor {
    let mut rng = Rng::new(seed);
    Tensor::from_fn(&[n, 1, 16, 16], |_| 2.0 * rng.uniform() - 1.0)
}

fn denoiser_data(n: usize) -> DenoiserData {
    let mut rng = Rng::new(9);
    DenoiserData {
        z0: images(n, 1),
        cond: rng.normal_tensor(&[n, COND_DIM]),
    }
}

/// Labels follow mean brightness, so a pooled linear head has signal.
fn classifier_data(n: usize) -> ClassifierData {
    let z0 = images(n, 2);
    let labels = (0..n).map(|i| z0.index_outer(i).mean() > 0.0).collect();
    ClassifierData { z0, labels }
}

fn random_head(clf: &mut UniClassifier, rng: &mut Rng) {
    let c = clf.feature_dim();
    for name in ["head.w", "head.shift"] {
        clf.head.insert(name, rng.normal_tensor(&[1, c]));
    }
    clf.head.insert("head.gain", Tensor::from_fn(&[1, c], |_| rng.range(0.5, 2.0)));
    clf.head.insert("head.b", rng.normal_tensor(&[1]));
}

#[test]
fn timestep_embedding_is_sin_then_cos() {
    let e = timestep_embedding(&[0, 7], 8);
    assert_eq!(e.shape(), &[2, 8]);
    assert_eq!(&e.data()[..8], &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
    assert!((e.data()[8] - 7f64.sin()).abs() < 1e-15);
    assert!((e.data()[12] - 7f64.cos()).abs() < 1e-15);
}

#[test]
fn predict_keeps_the_latent_shape() {
    let d = Denoiser::init(tiny(), &mut Rng::new(0));
    let z = images(3, 4);
    let out = d.predict(&z, &[0, 10, 49], &Tensor::zeros(&[3, COND_DIM])).unwrap();
    assert_eq!(out.shape(), z.shape());
    assert!(out.is_finite());
}

#[test]
fn zero_head_scores_one_half() {
    let d = Denoiser::init(tiny(), &mut Rng::new(0));
    let mut clf = UniClassifier::new(&d);
    let z = images(1, 5);
    assert!((clf.log_prob(&z, 20).unwrap() - 0.5f64.ln()).abs() < 1e-12);
    // A zero weight also cancels any standardization.
    let mut rng = Rng::new(6);
    random_head(&mut clf, &mut rng);
    clf.head.insert("head.w", Tensor::zeros(&[1, clf.feature_dim()]));
    clf.head.insert("head.b", Tensor::zeros(&[1]));
    assert!((clf.log_prob(&z, 20).unwrap() - 0.5f64.ln()).abs() < 1e-12);
}

#[test]
fn log_prob_is_log_sigmoid_of_logit() {
    let d = Denoiser::init(tiny(), &mut Rng::new(0));
    let mut clf = UniClassifier::new(&d);
    random_head(&mut clf, &mut Rng::new(7));
    let z = images(1, 8);
    let l = clf.logits(&z, &[3]).unwrap()[0];
    let expected = -(-l).exp().ln_1p();
    assert!((clf.log_prob(&z, 3).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn standardized_head_matches_explicit_arithmetic() {
    let d = Denoiser::init(tiny(), &mut Rng::new(0));
    let mut clf = UniClassifier::new(&d);
    random_head(&mut clf, &mut Rng::new(10));
    let z = images(2, 11);
    let f = clf.features(&z, &[4, 4]).unwrap();
    let c = clf.feature_dim();
    let h = |n: &str| clf.head.get(n).unwrap().data().to_vec();
    let (w, b, shift, gain) = (h("head.w"), h("head.b")[0], h("head.shift"), h("head.gain"));
    let logits = clf.logits(&z, &[4, 4]).unwrap();
    for i in 0..2 {
        let row = &f.data()[i * c..(i + 1) * c];
        let l: f64 = b + (0..c).map(|j| w[j] * gain[j] * (row[j] - shift[j])).sum::<f64>();
        assert!((logits[i] - l).abs() < 1e-10, "{} vs {l}", logits[i]);
    }
}

#[test]
fn classifier_input_grad_matches_finite_differences() {
    let d = Denoiser::init(tiny(), &mut Rng::new(1));
    let mut clf = UniClassifier::new(&d);
    let mut rng = Rng::new(12);
    for trial in 0..5 {
        random_head(&mut clf, &mut rng);
        let z = images(1, 100 + trial);
        let t = rng.below(50);
        let g = clf.input_grad(&z, t).unwrap();
        for _ in 0..4 {
            let k = rng.below(z.numel());
            let h = 1e-5;
            let mut plus = z.clone();
            plus.data_mut()[k] += h;
            let mut minus = z.clone();
            minus.data_mut()[k] -= h;
            let fd = (clf.log_prob(&plus, t).unwrap() - clf.log_prob(&minus, t).unwrap()) / (2.0 * h);
            let err = (g.data()[k] - fd).abs() / fd.abs().max(g.data()[k].abs()).max(1e-8);
            assert!(err < 1e-3, "trial {trial} index {k}: {} vs {fd}", g.data()[k]);
        }
    }
}

#[test]
fn zero_steps_returns_the_initialization() {
    let data = denoiser_data(12);
    let cfg = quick(0, 4);
    let a = train_denoiser(&data, &schedule(), &cfg, &tiny(), &Workers::sequential()).unwrap();
    let init = Denoiser::init(tiny(), &mut Rng::new(cfg.seed).derive("init"));
    assert_eq!(a.model.params, init.params);
    assert_eq!(a.curve.len(), 1);
}

#[test]
fn denoiser_training_is_deterministic_across_workers() {
    let data = denoiser_data(24);
    let cfg = quick(6, 8);
    let a = train_denoiser(&data, &schedule(), &cfg, &tiny(), &Workers::sequential()).unwrap();
    let b = train_denoiser(&data, &schedule(), &cfg, &tiny(), &Workers::new(3)).unwrap();
    assert_eq!(a.model.params, b.model.params);
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.curve.first().unwrap().step, 0);
    assert_eq!(a.curve.last().unwrap().step, 6);
    let init = Denoiser::init(tiny(), &mut Rng::new(cfg.seed).derive("init"));
    assert_ne!(a.model.params, init.params);
}

#[test]
fn classifier_training_leaves_the_encoder_untouched() {
    let schedule = schedule();
    let dn = train_denoiser(&denoiser_data(16), &schedule, &quick(3, 4), &tiny(), &Workers::sequential())
        .unwrap()
        .model;
    let before = dn.encoder_params().hash();
    let cfg = TrainConfig {
        eval_every: 5,
        ..quick(10, 8)
    };
    let data = classifier_data(40);
    let clf = train_classifier(&data, &dn, &schedule, &cfg, &Workers::sequential()).unwrap();
    assert_eq!(clf.model.encoder.hash(), before);
    assert_eq!(dn.encoder_params().hash(), before);
    assert_ne!(clf.model.head.get("head.w").unwrap(), &Tensor::zeros(&[1, 8]));

    let dir = tempfile::tempdir().unwrap();
    save_denoiser(&dir.path().join("den"), &dn, None, None).unwrap();
    save_classifier(&dir.path().join("clf"), &clf.model, None, None).unwrap();
    let den_index: CheckpointIndex =
        serde_json::from_slice(&std::fs::read(dir.path().join("den/index.json")).unwrap()).unwrap();
    let clf_index: CheckpointIndex =
        serde_json::from_slice(&std::fs::read(dir.path().join("clf/index.json")).unwrap()).unwrap();
    assert_eq!(den_index.encoder_hash, clf_index.encoder_hash);
    assert_eq!(clf_index.feature_stage.as_deref(), Some(UniClassifier::FEATURE_STAGE));
    let enc = dn.encoder_params();
    for (name, t) in enc.iter() {
        let a = std::fs::read(dir.path().join("den").join(format!("{name}.tensor"))).unwrap();
        let b = std::fs::read(dir.path().join("clf").join(format!("{name}.tensor"))).unwrap();
        assert_eq!(a, b, "{name}");
        assert_eq!(t.shape(), enc.get(name).unwrap().shape());
    }
}

#[test]
fn checkpoints_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let dn = Denoiser::init(tiny(), &mut Rng::new(3));
    save_denoiser(dir.path(), &dn, Some(&quick(1, 2)), Some("abc")).unwrap();
    assert_eq!(load_denoiser(dir.path()).unwrap(), dn);
    let mut clf = UniClassifier::new(&dn);
    random_head(&mut clf, &mut Rng::new(4));
    let cdir = dir.path().join("clf");
    save_classifier(&cdir, &clf, None, None).unwrap();
    assert_eq!(load_classifier(&cdir).unwrap(), clf);
    assert!(load_classifier(dir.path()).is_err(), "a denoiser is not a classifier");
}

#[test]
fn single_class_labels_are_rejected() {
    let dn = Denoiser::init(tiny(), &mut Rng::new(0));
    let data = ClassifierData {
        z0: images(10, 3),
        labels: vec![true; 10],
    };
    let err = train_classifier(&data, &dn, &schedule(), &quick(2, 4), &Workers::sequential());
    assert!(matches!(err, Err(TrainError::SingleClass { positives: 10, total: 10 })));
}

#[test]
fn bad_training_configs_are_rejected() {
    for cfg in [
        TrainConfig { lr: 0.0, ..quick(1, 2) },
        TrainConfig { batch: 0, ..quick(1, 2) },
        TrainConfig { held_out_fraction: 1.0, ..quick(1, 2) },
        TrainConfig { clip_norm: f64::NAN, ..quick(1, 2) },
    ] {
        assert!(cfg.validate().is_err(), "{cfg:?}");
    }
    assert!(TrainConfig::paper_classifier().validate().is_ok());
    assert_eq!(TrainConfig::paper_classifier().steps, 20_000);
    assert_eq!(TrainConfig::paper_classifier().lr, 1e-5);
}

#[test]
fn loss_curve_csv_has_header_and_blank_cells() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("loss.csv");
    let curve = [
        LossPoint { step: 0, loss: None, held_out_loss: Some(1.5) },
        LossPoint { step: 1, loss: Some(0.25), held_out_loss: None },
    ];
    write_loss_csv(&path, &curve).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "step,loss,held_out_loss");
    assert_eq!(lines[1], "0,,1.5000000000e0");
    assert_eq!(lines[2], "1,2.5000000000e-1,");
}
