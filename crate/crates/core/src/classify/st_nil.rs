use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{sample_indices, train_step, Classifier, ClassifierConfig, ClassifierOptim, DistillTargets, Minibatch};
use crate::autoencoder::{build_ae, train_ae, AeConfig, Autoencoder, Replay, TrainData, TrainHyper};
use crate::batch::ImageBatch;
use crate::data::{apply_session_jitter, train_val_split, LabeledImageSet, SessionJitter, Split};
use crate::error::{ensure, Error, Result};
use crate::flashcards::{construct_flashcards, FlashcardConfig};
use crate::nn::OptimizerKind;
use crate::seed;

fn default_epochs() -> usize {
    20
}
fn default_batch() -> usize {
    32
}
fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Sgd { lr: 1e-3, momentum: 0.9 }
}
fn default_lambda() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StNilConfig {
    #[serde(default)]
    pub classifier: ClassifierConfig,
    /// Appearance of each session; the training set is split evenly (and
    /// disjointly) across them.
    pub sessions: Vec<SessionJitter>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    /// Weight of the soft-label loss on flashcards; 0 gives naive fine-tuning.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    pub flashcards: FlashcardConfig,
    /// Unsupervised autoencoder that produces the flashcards.
    pub ae: AeConfig,
    #[serde(default)]
    pub ae_hyper: TrainHyper,
    #[serde(default)]
    pub seed: u64,
}

impl StNilConfig {
    pub fn validate(&self) -> Result<()> {
        self.classifier.validate()?;
        if self.sessions.len() < 2 {
            return Err(Error::Config(format!("{} session(s) given; at least 2 are needed", self.sessions.len())));
        }
        ensure!(self.epochs >= 1 && self.batch_size >= 1, "epochs and batch_size must be positive");
        ensure!(self.lambda >= 0.0 && self.lambda.is_finite(), "lambda must be >= 0");
        if self.lambda > 0.0 {
            self.flashcards.validate()?;
            self.ae.validate()?;
            self.ae_hyper.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StNilReport {
    /// Test accuracy (percent) after each session.
    pub accuracies: Vec<f64>,
    pub session_sizes: Vec<usize>,
    pub flashcards_per_session: Vec<usize>,
}

/// Disjoint, evenly sized index chunks of a seeded permutation of `0..n`.
fn session_indices(n: usize, sessions: usize, seed_value: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::derived_rng(seed_value, "st-nil-sessions", 0));
    (0..sessions).map(|s| idx[s * n / sessions..(s + 1) * n / sessions].to_vec()).collect()
}

/// Single-task new-instance learning: one 10-way (or `num_classes`-way)
/// head trained across sessions of new instances with shifted appearance.
/// From the second session on, flashcards from the previous session's
/// autoencoder, soft-labelled by the previous classifier, are replayed.
/// Accuracy is measured on the unmodified `test` set.
pub fn train_st_nil(train: &LabeledImageSet, test: &LabeledImageSet, config: &StNilConfig) -> Result<StNilReport> {
    config.validate()?;
    let labels = train.labels.as_deref().ok_or_else(|| Error::InvalidArgument("ST-NIL training set has no labels".into()))?;
    let test_labels = test.labels.as_deref().ok_or_else(|| Error::InvalidArgument("ST-NIL test set has no labels".into()))?;
    let classes = train.num_classes.ok_or_else(|| Error::InvalidArgument("ST-NIL training set has no class count".into()))?;
    ensure!(train.len() >= config.sessions.len(), "{} samples cannot fill {} sessions", train.len(), config.sessions.len());

    let mut clf = Classifier::new(&config.classifier, &[classes], seed::derive(config.seed, "st-nil-init", 0))?;
    let mut optim = ClassifierOptim::new(config.optimizer, &clf);
    let mut ae: Option<Autoencoder> = None;
    let mut report = StNilReport { accuracies: Vec::new(), session_sizes: Vec::new(), flashcards_per_session: Vec::new() };
    let chunks = session_indices(train.len(), config.sessions.len(), config.seed);
    for (s, (jitter, idx)) in config.sessions.iter().zip(&chunks).enumerate() {
        let images = apply_session_jitter(&train.images.select(idx), jitter)?;
        let y: Vec<u32> = idx.iter().map(|&i| labels[i]).collect();

        let mut flashcards = None;
        let distill = match &ae {
            Some(model) if config.lambda > 0.0 => {
                let mut fc = config.flashcards.clone();
                fc.seed = seed::derive(config.flashcards.seed ^ config.seed, "st-nil-flashcards", s as u64);
                let images = construct_flashcards(model, &fc)?.images;
                flashcards = Some(images.clone());
                // soft labels fixed for the whole session
                Some(DistillTargets::from_classifier(&clf, images, 1, false, config.lambda)?)
            }
            _ => None,
        };
        report.session_sizes.push(images.len());
        report.flashcards_per_session.push(distill.as_ref().map_or(0, DistillTargets::len));

        let mut rng = seed::derived_rng(config.seed, "st-nil-batches", s as u64);
        let bs = config.batch_size.min(images.len());
        for _ in 0..config.epochs {
            let mut order: Vec<usize> = (0..images.len()).collect();
            order.shuffle(&mut rng);
            for chunk in order.chunks(bs) {
                let batch_images = images.select(chunk);
                let batch_labels: Vec<u32> = chunk.iter().map(|&i| y[i]).collect();
                let replay_idx = distill.as_ref().map(|d| sample_indices(d.len(), chunk.len(), &mut rng));
                let batch = Minibatch {
                    current: &batch_images,
                    labels: &batch_labels,
                    head: 0,
                    replay: distill.as_ref().zip(replay_idx.as_deref()),
                };
                train_step(&mut clf, &mut optim, &batch)?;
            }
        }
        report.accuracies.push(clf.accuracy_with_id(&test.images, test_labels, 0)?);

        if config.lambda > 0.0 && s + 1 < config.sessions.len() {
            ae = Some(train_session_ae(ae, &images, flashcards.as_ref(), config, s)?);
        }
    }
    Ok(report)
}

fn train_session_ae(ae: Option<Autoencoder>, images: &ImageBatch, flashcards: Option<&ImageBatch>, config: &StNilConfig, s: usize) -> Result<Autoencoder> {
    let model = match ae {
        Some(m) => m,
        None => build_ae(&config.ae, seed::derive(config.seed, "st-nil-ae-init", 0))?,
    };
    let set = LabeledImageSet { images: images.clone(), labels: None, num_classes: None, name: "session".into(), split: Split::Train };
    let (tr, va) = train_val_split(&set, 0.1, seed::derive(config.seed, "st-nil-ae-split", s as u64))?;
    let hyper = TrainHyper { seed: seed::derive(config.seed, "st-nil-ae", s as u64), ..config.ae_hyper.clone() };
    let replay = flashcards.map(|images| Replay { images, lambda: config.lambda });
    let data = TrainData { train: &tr.images, val: &va.images, replay, noise_factor: None, noise_replay: false };
    Ok(train_ae(model, &data, &hyper)?.model)
}
