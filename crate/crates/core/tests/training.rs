use gca_core::geometry::{apply_rotation, Rotation};
use gca_core::learner::{evaluate, evaluate_samples, sample_logits, train, TrainConfig};
use gca_core::network::{Ablation, ArchConfig, GcaNetwork};
use gca_core::pcio::{toy_suite, Dataset, RotationMode, ToySuiteConfig};

fn small_suite(train: usize, test: usize, seed: u64) -> Dataset {
    toy_suite(&ToySuiteConfig {
        per_class_train: train,
        per_class_test: test,
        seed,
        ..ToySuiteConfig::default()
    })
    .unwrap()
}

fn toy_net(seed: u64) -> GcaNetwork {
    GcaNetwork::new(ArchConfig::toy(5, Ablation::default()), seed).unwrap()
}

#[test]
fn one_epoch_smoke() {
    let mut data = small_suite(2, 1, 1);
    data.train.truncate(10);
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let (_, m) = train(toy_net(0), &data, &cfg).unwrap();
    assert_eq!(m.epochs.len(), 1);
    assert!(m.epochs[0].loss.is_finite());
    assert_eq!(m.test.total, 5);
    for (label, row) in m.test.confusion.iter().enumerate() {
        let expected = data.test.iter().filter(|c| c.label == Some(label)).count();
        assert_eq!(row.iter().sum::<usize>(), expected);
    }
    assert!((0.0..=1.0).contains(&m.test.accuracy));
    assert_eq!(m.config, cfg);
}

#[test]
fn twenty_samples_are_memorised() {
    let data = small_suite(4, 0, 2);
    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 8,
        rotation_train: RotationMode::SO3,
        ..TrainConfig::default()
    };
    let (net, m) = train(toy_net(1), &data, &cfg).unwrap();
    let train_eval = evaluate_samples(&net, &data.train, RotationMode::SO3, 9).unwrap();
    assert_eq!(train_eval.accuracy, 1.0, "final loss {:?}", m.epochs.last());
}

#[test]
fn training_is_deterministic() {
    let data = small_suite(3, 1, 3);
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 4,
        ..TrainConfig::default()
    };
    let (a, ma) = train(toy_net(2), &data, &cfg).unwrap();
    let (b, mb) = train(toy_net(2), &data, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ma, mb);
}

#[test]
fn loss_falls_on_a_fixed_batch() {
    let mut data = small_suite(2, 0, 4);
    data.train.truncate(8);
    let cfg = TrainConfig {
        epochs: 30,
        batch_size: 8,
        rotation_train: RotationMode::None,
        ..TrainConfig::default()
    };
    let (_, m) = train(toy_net(3), &data, &cfg).unwrap();
    assert!(!m.loss_regression, "{:?}", m.epoch_losses());
}

#[test]
fn rotated_evaluation_matches_unrotated_per_sample() {
    let data = small_suite(1, 4, 5);
    let net = toy_net(4);
    let plain = sample_logits(&net, &data.test, RotationMode::None, 1).unwrap();
    let rotated = sample_logits(&net, &data.test, RotationMode::SO3, 1).unwrap();
    for ((a, da), (b, db)) in plain.iter().zip(&rotated) {
        assert_eq!((*da, *db), (0, 0));
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-6);
        }
    }
    let e_none = evaluate(&net, &data, RotationMode::None, 1).unwrap();
    let e_so3 = evaluate(&net, &data, RotationMode::SO3, 1).unwrap();
    assert_eq!(e_none.predictions, e_so3.predictions);
}

#[test]
fn no_rotation_equals_zero_angle() {
    let data = small_suite(1, 2, 6);
    let net = toy_net(5);
    let zero = Rotation::about_z(0.0);
    let turned: Vec<_> = data.test.iter().map(|c| apply_rotation(c, &zero)).collect();
    let a = sample_logits(&net, &data.test, RotationMode::None, 0).unwrap();
    let b = sample_logits(&net, &turned, RotationMode::None, 0).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        evaluate(&net, &data, RotationMode::SO3, 3).unwrap(),
        evaluate(&net, &data, RotationMode::SO3, 3).unwrap()
    );
}

#[test]
fn hand_labelled_accuracy() {
    let data = small_suite(1, 1, 7);
    let net = toy_net(6);
    let samples = data.test[..3].to_vec();
    let logits = sample_logits(&net, &samples, RotationMode::None, 0).unwrap();
    let expected = logits
        .iter()
        .zip(&samples)
        .filter(|((l, _), c)| {
            let best = (0..l.len()).fold(0, |b, i| if l[i] > l[b] { i } else { b });
            Some(best) == c.label
        })
        .count();
    let m = evaluate_samples(&net, &samples, RotationMode::None, 0).unwrap();
    assert_eq!(m.correct, expected);
    assert_eq!(m.accuracy, expected as f64 / 3.0);
}

#[test]
fn saved_model_reproduces_logits() {
    let data = small_suite(2, 1, 8);
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 5,
        ..TrainConfig::default()
    };
    let (net, _) = train(toy_net(7), &data, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    net.save(&path).unwrap();
    let back = GcaNetwork::load(&path).unwrap();
    assert_eq!(back, net);
    for c in &data.test {
        let a = net.logits(c).unwrap();
        let b = back.logits(c).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-12);
        }
    }
}

#[test]
fn training_rejects_bad_setups() {
    let data = small_suite(1, 1, 9);
    let cfg = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    assert!(train(toy_net(0), &data, &cfg).is_err());
    let wrong = GcaNetwork::new(ArchConfig::toy(3, Ablation::default()), 0).unwrap();
    assert!(train(wrong, &data, &TrainConfig::default()).is_err());
}
