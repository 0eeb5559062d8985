use flashcards_core::autoencoder::TrainHyper;
use flashcards_core::classify::{
    split_by_classes, train_st_nil, train_task_il, Classifier, ClassifierConfig, DistillTargets, StNilConfig, TaskIlConfig,
};
use flashcards_core::data::{DataRoot, LabeledImageSet, SessionJitter, Split};
use flashcards_core::flashcards::FlashcardConfig;
use flashcards_core::nn::OptimizerKind;
use flashcards_core::autoencoder::AeConfig;
use flashcards_core::Error;

fn tiny() -> ClassifierConfig {
    ClassifierConfig { conv_channels: vec![4, 8], strides: vec![2, 2], hidden: 32, latent_dim: 16 }
}

fn blobs(split: Split, n: usize) -> LabeledImageSet {
    DataRoot::new("unused").load("synthetic-blobs", split, Some(n)).unwrap()
}

#[test]
fn soft_scores_are_distributions() {
    let clf = Classifier::new(&tiny(), &[2, 3], 1).unwrap();
    let images = blobs(Split::Test, 20).images;
    let t = DistillTargets::from_classifier(&clf, images, 2, true, 1.0).unwrap();
    assert_eq!(t.soft_scores.len(), 2);
    for (s, k) in t.soft_scores.iter().zip([2, 3]) {
        for row in s.chunks(k) {
            assert!(row.iter().all(|&p| p >= 0.0));
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        }
    }
    assert_eq!(t.latent_targets.len(), 20 * 16);
    let mut broken = t.clone();
    broken.soft_scores[0][0] += 0.5;
    assert!(matches!(broken.validate(), Err(Error::Numeric(_))));
}

#[test]
fn encoder_copy_into_autoencoder_is_exact() {
    let clf = Classifier::new(&tiny(), &[5], 4).unwrap();
    let mut ae = clf.autoencoder(9).unwrap();
    assert_eq!(ae.encoder().params(), clf.encoder().params());
    ae.encoder_mut().params_mut().iter_mut().for_each(|v| *v += 1.0);
    clf.copy_encoder_into(&mut ae);
    let a: Vec<u32> = ae.encoder().params().iter().map(|v| v.to_bits()).collect();
    let b: Vec<u32> = clf.encoder().params().iter().map(|v| v.to_bits()).collect();
    assert_eq!(a, b);
}

#[test]
fn with_id_accuracy_bounds_without_id() {
    let test = blobs(Split::Test, 60);
    let tasks = split_by_classes(&blobs(Split::Train, 100), &test, &[vec![0, 1], vec![2, 3, 4]]).unwrap();
    for seed in 0..4 {
        let clf = Classifier::new(&tiny(), &[2, 3], seed).unwrap();
        for (h, t) in tasks.iter().enumerate() {
            let labels = t.test.labels.as_ref().unwrap();
            let with = clf.accuracy_with_id(&t.test.images, labels, h).unwrap();
            let without = clf.accuracy_without_id(&t.test.images, labels, h, 2).unwrap();
            assert!(with >= without, "seed {seed} head {h}: {with} < {without}");
            assert_eq!(clf.accuracy_without_id(&t.test.images, labels, h, h + 1).unwrap() <= with, true);
        }
    }
}

fn task_il_config(lambda: f64) -> TaskIlConfig {
    TaskIlConfig {
        classifier: tiny(),
        iterations: 20,
        ae_iterations: Some(10),
        batch_size: 16,
        optimizer: OptimizerKind::Adam { lr: 1e-3 },
        lambda,
        latent_regularization: true,
        flashcards: FlashcardConfig::new(32, 2, 0),
        seed: 5,
    }
}

#[test]
fn task_il_fills_lower_triangle_deterministically() {
    let tasks = split_by_classes(&blobs(Split::Train, 150), &blobs(Split::Test, 60), &[vec![0, 1], vec![2, 3]]).unwrap();
    let a = train_task_il(&tasks, &task_il_config(1.0)).unwrap();
    let b = train_task_il(&tasks, &task_il_config(1.0)).unwrap();
    assert_eq!(a.with_id.m, b.with_id.m);
    assert_eq!(a.without_id.m, b.without_id.m);
    for t in 0..2 {
        for j in 0..=t {
            let (w, wo) = (a.with_id.get(t, j).unwrap(), a.without_id.get(t, j).unwrap());
            assert!((0.0..=100.0).contains(&w) && wo <= w);
        }
    }
    assert!(a.final_with_id() >= a.final_without_id());
    let plain = train_task_il(&tasks, &task_il_config(0.0)).unwrap();
    assert_eq!(plain.with_id.m.len(), 2);
}

fn st_nil_config(sessions: usize) -> StNilConfig {
    StNilConfig {
        classifier: tiny(),
        sessions: (0..sessions).map(|i| SessionJitter { brightness: 0.05 * i as f64, saturation: 0.0 }).collect(),
        epochs: 1,
        batch_size: 16,
        optimizer: OptimizerKind::Sgd { lr: 1e-2, momentum: 0.9 },
        lambda: 1.0,
        flashcards: FlashcardConfig::new(20, 2, 0),
        ae: AeConfig::new(1, 4),
        ae_hyper: TrainHyper { epochs: 1, batch_size: 16, ..Default::default() },
        seed: 2,
    }
}

#[test]
fn st_nil_reports_one_accuracy_per_session() {
    let (train, test) = (blobs(Split::Train, 90), blobs(Split::Test, 40));
    let rep = train_st_nil(&train, &test, &st_nil_config(3)).unwrap();
    assert_eq!(rep.accuracies.len(), 3);
    assert_eq!(rep.session_sizes.iter().sum::<usize>(), 90);
    assert_eq!(rep.flashcards_per_session, vec![0, 20, 20]);
    let again = train_st_nil(&train, &test, &st_nil_config(3)).unwrap();
    assert_eq!(rep.accuracies, again.accuracies);
}

#[test]
fn st_nil_needs_two_sessions() {
    let (train, test) = (blobs(Split::Train, 20), blobs(Split::Test, 10));
    assert!(matches!(train_st_nil(&train, &test, &st_nil_config(1)), Err(Error::Config(_))));
}
